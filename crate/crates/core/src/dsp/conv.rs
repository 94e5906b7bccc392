//! K=7 convolutional code (generators 133, 171 octal) with 802.11 puncturing
//! and a hard-decision Viterbi decoder.
//!
//! Encoding appends six zero tail bits so every frame ends in state 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONSTRAINT_LENGTH: usize = 7;
pub const TAIL_BITS: usize = CONSTRAINT_LENGTH - 1;
pub const G0: u32 = 0o133;
pub const G1: u32 = 0o171;
pub const TRACEBACK_DEPTH: usize = 5 * CONSTRAINT_LENGTH;
const STATES: usize = 1 << TAIL_BITS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("invalid code rate {0}")]
    InvalidRate(String),
    #[error("{0} coded bits do not correspond to any terminated frame at this rate")]
    BadCodedLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeRate {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "2/3")]
    TwoThirds,
    #[serde(rename = "3/4")]
    ThreeQuarters,
}

impl CodeRate {
    /// Register encoding: 0 → 1/2, 1 → 2/3, 2 → 3/4.
    pub fn from_register(v: u32) -> Result<Self, CodeError> {
        match v {
            0 => Ok(CodeRate::Half),
            1 => Ok(CodeRate::TwoThirds),
            2 => Ok(CodeRate::ThreeQuarters),
            other => Err(CodeError::InvalidRate(other.to_string())),
        }
    }

    pub fn register_value(self) -> u32 {
        match self {
            CodeRate::Half => 0,
            CodeRate::TwoThirds => 1,
            CodeRate::ThreeQuarters => 2,
        }
    }

    /// Keep-mask over the interleaved mother stream A0 B0 A1 B1 ...
    pub fn puncture_mask(self) -> &'static [bool] {
        match self {
            CodeRate::Half => &[true, true],
            CodeRate::TwoThirds => &[true, true, true, false],
            CodeRate::ThreeQuarters => &[true, true, true, false, false, true],
        }
    }

    pub fn as_fraction(self) -> (usize, usize) {
        match self {
            CodeRate::Half => (1, 2),
            CodeRate::TwoThirds => (2, 3),
            CodeRate::ThreeQuarters => (3, 4),
        }
    }
}

impl std::str::FromStr for CodeRate {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1/2" => Ok(CodeRate::Half),
            "2/3" => Ok(CodeRate::TwoThirds),
            "3/4" => Ok(CodeRate::ThreeQuarters),
            other => Err(CodeError::InvalidRate(other.to_string())),
        }
    }
}

impl std::fmt::Display for CodeRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (k, n) = self.as_fraction();
        write!(f, "{k}/{n}")
    }
}

#[inline]
fn parity(x: u32) -> u8 {
    (x.count_ones() & 1) as u8
}

/// Coded length for `info_bits` message bits once the tail is added.
pub fn coded_len(info_bits: usize, rate: CodeRate) -> usize {
    let mask = rate.puncture_mask();
    let mother = 2 * (info_bits + TAIL_BITS);
    let full = mother / mask.len();
    let kept_per_period = mask.iter().filter(|&&k| k).count();
    full * kept_per_period + mask[..mother % mask.len()].iter().filter(|&&k| k).count()
}

/// Encodes `bits` plus six zero tail bits and punctures the result.
pub fn conv_encode(bits: &[u8], rate: CodeRate) -> Vec<u8> {
    let mask = rate.puncture_mask();
    let mut out = Vec::with_capacity(coded_len(bits.len(), rate));
    let mut reg: u32 = 0;
    let mut pos = 0usize;
    let tail = [0u8; TAIL_BITS];
    for &b in bits.iter().chain(tail.iter()) {
        reg = (reg >> 1) | (((b & 1) as u32) << TAIL_BITS);
        for bit in [parity(reg & G0), parity(reg & G1)] {
            if mask[pos] {
                out.push(bit);
            }
            pos = (pos + 1) % mask.len();
        }
    }
    out
}

/// Message length that produces `coded` bits at `rate`, if any.
pub fn info_len_for(coded: usize, rate: CodeRate) -> Option<usize> {
    // coded_len grows by 1 or 2 per message bit, so the guess is close.
    let (k, n) = rate.as_fraction();
    let approx = (coded * k / n).saturating_sub(TAIL_BITS + 2);
    (approx..=approx + 8).find(|&m| coded_len(m, rate) == coded)
}

fn depuncture(coded: &[u8], rate: CodeRate, mother_len: usize) -> Vec<Option<u8>> {
    let mask = rate.puncture_mask();
    let mut it = coded.iter();
    (0..mother_len)
        .map(|p| {
            if mask[p % mask.len()] {
                it.next().map(|&b| b & 1)
            } else {
                None
            }
        })
        .collect()
}

/// Hard-decision Viterbi decoder for terminated frames. Bits are released
/// with a traceback depth of 5·K; the last bits come from the traceback out of
/// the zero state reached by the tail.
pub fn viterbi_decode(coded: &[u8], rate: CodeRate) -> Result<Vec<u8>, CodeError> {
    let info = info_len_for(coded.len(), rate).ok_or(CodeError::BadCodedLength(coded.len()))?;
    let steps = info + TAIL_BITS;
    let mother = depuncture(coded, rate, 2 * steps);

    // Branch outputs for (state, input).
    let mut branch = [[0u8; 2]; STATES * 2];
    for s in 0..STATES {
        for b in 0..2 {
            let reg = ((b as u32) << TAIL_BITS) | s as u32;
            branch[s * 2 + b] = [parity(reg & G0), parity(reg & G1)];
        }
    }

    const UNREACHED: u32 = u32::MAX / 4;
    let mut metric = vec![UNREACHED; STATES];
    metric[0] = 0;
    let mut next = vec![0u32; STATES];
    let mut decisions: Vec<u64> = Vec::with_capacity(steps);
    let mut decoded = vec![0u8; steps];

    let traceback = |decisions: &[u64], mut state: usize, from: usize, count: usize| {
        // Returns the input decided at step `from + 1 - count`.
        let mut bit = 0u8;
        for t in (from + 1 - count..=from).rev() {
            bit = (state >> (TAIL_BITS - 1)) as u8;
            let x = ((decisions[t] >> state) & 1) as usize;
            state = ((state & (STATES / 2 - 1)) << 1) | x;
        }
        bit
    };

    for t in 0..steps {
        let (ra, rb) = (mother[2 * t], mother[2 * t + 1]);
        let mut word = 0u64;
        for ns in 0..STATES {
            let b = ns >> (TAIL_BITS - 1);
            let base = (ns & (STATES / 2 - 1)) << 1;
            let mut best = u32::MAX;
            let mut pick = 0usize;
            for x in 0..2 {
                let s = base | x;
                let out = branch[s * 2 + b];
                let mut m = metric[s];
                if let Some(r) = ra {
                    m += (r != out[0]) as u32;
                }
                if let Some(r) = rb {
                    m += (r != out[1]) as u32;
                }
                if m < best {
                    best = m;
                    pick = x;
                }
            }
            next[ns] = best;
            word |= (pick as u64) << ns;
        }
        decisions.push(word);
        std::mem::swap(&mut metric, &mut next);
        let floor = *metric.iter().min().unwrap();
        if floor > 1 << 20 {
            metric.iter_mut().for_each(|m| *m -= floor);
        }
        if t + 1 > TRACEBACK_DEPTH {
            let best_state = (0..STATES).min_by_key(|&s| metric[s]).unwrap();
            decoded[t - TRACEBACK_DEPTH] = traceback(&decisions, best_state, t, TRACEBACK_DEPTH + 1);
        }
    }

    // Flush: everything not yet released comes from the zero end state.
    let start = steps.saturating_sub(TRACEBACK_DEPTH);
    let mut state = 0usize;
    for t in (start..steps).rev() {
        decoded[t] = (state >> (TAIL_BITS - 1)) as u8;
        let x = ((decisions[t] >> state) & 1) as usize;
        state = ((state & (STATES / 2 - 1)) << 1) | x;
    }
    decoded.truncate(info);
    Ok(decoded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_in_zero_out() {
        for rate in [CodeRate::Half, CodeRate::TwoThirds, CodeRate::ThreeQuarters] {
            let c = conv_encode(&[0; 48], rate);
            assert!(c.iter().all(|&b| b == 0));
            assert_eq!(c.len(), coded_len(48, rate));
        }
    }

    #[test]
    fn lengths_follow_rate() {
        assert_eq!(coded_len(42, CodeRate::Half), 96);
        assert_eq!(coded_len(42, CodeRate::TwoThirds), 72);
        assert_eq!(coded_len(42, CodeRate::ThreeQuarters), 64);
        for rate in [CodeRate::Half, CodeRate::TwoThirds, CodeRate::ThreeQuarters] {
            for m in 0..200 {
                assert_eq!(info_len_for(coded_len(m, rate), rate), Some(m));
            }
        }
    }

    #[test]
    fn single_one_impulse_response() {
        // A lone 1 produces the generator taps on each branch.
        let c = conv_encode(&[1], CodeRate::Half);
        let a: Vec<u8> = c.iter().step_by(2).copied().collect();
        let b: Vec<u8> = c.iter().skip(1).step_by(2).copied().collect();
        assert_eq!(a, vec![1, 0, 1, 1, 0, 1, 1]);
        assert_eq!(b, vec![1, 1, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn corrects_a_flipped_bit() {
        let msg: Vec<u8> = (0..100).map(|k| ((k * 7 + 3) % 5 == 0) as u8).collect();
        let mut c = conv_encode(&msg, CodeRate::Half);
        c[40] ^= 1;
        assert_eq!(viterbi_decode(&c, CodeRate::Half).unwrap(), msg);
    }

    #[test]
    fn bad_length_and_rate() {
        assert!(matches!(
            viterbi_decode(&[0; 5], CodeRate::Half),
            Err(CodeError::BadCodedLength(5))
        ));
        assert!("5/6".parse::<CodeRate>().is_err());
        assert!(CodeRate::from_register(3).is_err());
    }
}
