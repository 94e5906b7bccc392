//! Mocked RF plane: analog control registers and a loopback channel.
//!
//! Ranges and step sizes model an AD9361-class transceiver.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::unit::Sample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfError {
    #[error("unknown RF parameter {0}")]
    UnknownParam(String),
    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
}

impl RfError {
    pub fn code(&self) -> &'static str {
        match self {
            RfError::UnknownParam(_) => "UnknownParam",
            RfError::OutOfRange { .. } => "OutOfRange",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfParam {
    LoFreqHz,
    FilterBwHz,
    PaGainDb,
    LnaGainDb,
}

impl RfParam {
    pub const ALL: [RfParam; 4] = [
        RfParam::LoFreqHz,
        RfParam::FilterBwHz,
        RfParam::PaGainDb,
        RfParam::LnaGainDb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RfParam::LoFreqHz => "lo_freq_hz",
            RfParam::FilterBwHz => "filter_bw_hz",
            RfParam::PaGainDb => "pa_gain_db",
            RfParam::LnaGainDb => "lna_gain_db",
        }
    }

    /// (min, max, step)
    pub fn grid(self) -> (f64, f64, f64) {
        match self {
            RfParam::LoFreqHz => (7.0e7, 6.0e9, 1.0),
            RfParam::FilterBwHz => (2.0e5, 5.6e7, 1.0),
            RfParam::PaGainDb => (0.0, 89.75, 0.25),
            RfParam::LnaGainDb => (0.0, 76.0, 1.0),
        }
    }

    fn default_value(self) -> f64 {
        match self {
            RfParam::LoFreqHz => 2.412e9,
            RfParam::FilterBwHz => 2.0e7,
            RfParam::PaGainDb => 0.0,
            RfParam::LnaGainDb => 0.0,
        }
    }
}

impl std::str::FromStr for RfParam {
    type Err = RfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RfParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| RfError::UnknownParam(s.to_string()))
    }
}

impl fmt::Display for RfParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub lo_freq_hz: f64,
    pub filter_bw_hz: f64,
    pub pa_gain_db: f64,
    pub lna_gain_db: f64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            lo_freq_hz: RfParam::LoFreqHz.default_value(),
            filter_bw_hz: RfParam::FilterBwHz.default_value(),
            pa_gain_db: RfParam::PaGainDb.default_value(),
            lna_gain_db: RfParam::LnaGainDb.default_value(),
        }
    }
}

impl RfConfig {
    pub fn get(&self, p: RfParam) -> f64 {
        match p {
            RfParam::LoFreqHz => self.lo_freq_hz,
            RfParam::FilterBwHz => self.filter_bw_hz,
            RfParam::PaGainDb => self.pa_gain_db,
            RfParam::LnaGainDb => self.lna_gain_db,
        }
    }

    fn slot(&mut self, p: RfParam) -> &mut f64 {
        match p {
            RfParam::LoFreqHz => &mut self.lo_freq_hz,
            RfParam::FilterBwHz => &mut self.filter_bw_hz,
            RfParam::PaGainDb => &mut self.pa_gain_db,
            RfParam::LnaGainDb => &mut self.lna_gain_db,
        }
    }
}

/// Range-checks `value` and snaps it to the parameter's step grid.
pub fn snap(p: RfParam, value: f64) -> Result<f64, RfError> {
    let (min, max, step) = p.grid();
    if !value.is_finite() || value < min || value > max {
        return Err(RfError::OutOfRange {
            name: p.name().to_string(),
            value,
            min,
            max,
        });
    }
    let k = ((value - min) / step).round();
    Ok((min + k * step).clamp(min, max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfAck {
    pub param: RfParam,
    pub requested: f64,
    pub applied: f64,
    pub snapped: bool,
}

/// Register bank for the RF plane. Access is serialized.
#[derive(Debug, Default)]
pub struct RfFrontend {
    config: Mutex<RfConfig>,
}

impl RfFrontend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_rf_param(&self, name: &str, value: f64) -> Result<RfAck, RfError> {
        let param: RfParam = name.parse()?;
        let applied = snap(param, value)?;
        *self.lock().slot(param) = applied;
        Ok(RfAck {
            param,
            requested: value,
            applied,
            snapped: applied != value,
        })
    }

    pub fn get_rf_param(&self, name: &str) -> Result<f64, RfError> {
        let param: RfParam = name.parse()?;
        Ok(self.lock().get(param))
    }

    pub fn config(&self) -> RfConfig {
        *self.lock()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, RfConfig> {
        self.config.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ChannelModel {
    Identity,
    Awgn { snr_db: f64, seed: u64 },
}

/// Mean |x|² of a stream; zero for an empty one.
pub fn mean_power(x: &[Sample]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(Sample::norm_sqr).sum::<f64>() / x.len() as f64
}

/// Per-component noise standard deviation giving `snr_db` against the
/// measured power of `x`.
pub fn awgn_noise_std(x: &[Sample], snr_db: f64) -> f64 {
    let noise_power = mean_power(x) / 10f64.powf(snr_db / 10.0);
    (noise_power / 2.0).sqrt()
}

/// Two independent standard normal draws (Box–Muller).
pub fn gaussian_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let a = 2.0 * PI * u2;
    (r * a.cos(), r * a.sin())
}

pub fn loopback(tx: &[Sample], channel: ChannelModel) -> Vec<Sample> {
    match channel {
        ChannelModel::Identity => tx.to_vec(),
        ChannelModel::Awgn { snr_db, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = awgn_noise_std(tx, snr_db);
            tx.iter()
                .map(|s| {
                    let (a, b) = gaussian_pair(&mut rng);
                    Sample::new(s.i + sigma * a, s.q + sigma * b)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping_and_range() {
        let rf = RfFrontend::new();
        let ack = rf.set_rf_param("pa_gain_db", 10.1).unwrap();
        assert_eq!(ack.applied, 10.0);
        assert!(ack.snapped);
        assert_eq!(rf.get_rf_param("pa_gain_db").unwrap(), 10.0);
        assert!(matches!(
            rf.set_rf_param("pa_gain_db", 90.0),
            Err(RfError::OutOfRange { .. })
        ));
        assert!(matches!(
            rf.set_rf_param("vco", 1.0),
            Err(RfError::UnknownParam(_))
        ));
        let ack = rf.set_rf_param("lo_freq_hz", 2.412e9).unwrap();
        assert!(!ack.snapped);
        assert_eq!(rf.get_rf_param("lo_freq_hz").unwrap(), 2.412e9);
    }

    #[test]
    fn lna_integer_grid() {
        assert_eq!(snap(RfParam::LnaGainDb, 12.6).unwrap(), 13.0);
        assert!(snap(RfParam::LnaGainDb, 76.5).is_err());
        assert!(snap(RfParam::LoFreqHz, f64::NAN).is_err());
    }

    #[test]
    fn identity_and_determinism() {
        let x: Vec<Sample> = (0..100).map(|k| Sample::new(k as f64, 1.0)).collect();
        assert_eq!(loopback(&x, ChannelModel::Identity), x);
        let ch = ChannelModel::Awgn { snr_db: 10.0, seed: 9 };
        assert_eq!(loopback(&x, ch), loopback(&x, ch));
        assert_eq!(loopback(&x, ch).len(), x.len());
    }
}
