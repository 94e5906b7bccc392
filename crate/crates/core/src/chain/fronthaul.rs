//! CPRI-style fronthaul bandwidth arithmetic.

use super::ChainError;

/// Raw I/Q transport rate in bits per second.
pub fn fronthaul_rate(antennas: u32, sample_rate_sps: f64, bits_per_component: u32) -> Result<f64, ChainError> {
    if antennas == 0 {
        return Err(ChainError::NotPositive("antennas".into()));
    }
    if !(sample_rate_sps > 0.0 && sample_rate_sps.is_finite()) {
        return Err(ChainError::NotPositive("sample_rate_sps".into()));
    }
    if bits_per_component == 0 {
        return Err(ChainError::NotPositive("bits_per_component".into()));
    }
    Ok(antennas as f64 * sample_rate_sps * 2.0 * bits_per_component as f64)
}

/// `7.3728e9` and `7.3728 Gbps` for 7.3728e9.
pub fn format_rate(bps: f64) -> (String, String) {
    let sci = format!("{bps:e}");
    let (scale, unit) = [(1e12, "Tbps"), (1e9, "Gbps"), (1e6, "Mbps"), (1e3, "kbps")]
        .into_iter()
        .find(|(s, _)| bps >= *s)
        .unwrap_or((1.0, "bps"));
    let v = format!("{:.6}", bps / scale);
    let v = v.trim_end_matches('0').trim_end_matches('.');
    (sci, format!("{v} {unit}"))
}
