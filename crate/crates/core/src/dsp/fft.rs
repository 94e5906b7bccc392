//! Radix-2 FFT: iterative, bit-reversal permutation followed by in-place
//! butterflies.

use std::f64::consts::PI;

use thiserror::Error;

use crate::unit::Sample;

pub const SUPPORTED_LENGTHS: [usize; 8] = [16, 32, 64, 128, 256, 512, 1024, 2048];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FftError {
    #[error("unsupported FFT length {0}")]
    UnsupportedLength(usize),
}

pub fn is_supported(n: usize) -> bool {
    SUPPORTED_LENGTHS.contains(&n)
}

/// Precomputed twiddles and bit-reversal table for one length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Sample>,
    reversed: Vec<usize>,
}

impl FftPlan {
    /// Any power of two ≥ 1 is plannable; the unit-facing entry points
    /// restrict to [`SUPPORTED_LENGTHS`].
    pub fn new(n: usize) -> Result<Self, FftError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(FftError::UnsupportedLength(n));
        }
        let bits = n.trailing_zeros();
        let reversed = (0..n)
            .map(|k| if bits == 0 { 0 } else { k.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Sample::new(a.cos(), a.sin())
            })
            .collect();
        Ok(Self {
            n,
            twiddles,
            reversed,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn transform(&self, data: &mut [Sample], inverse: bool) {
        assert_eq!(data.len(), self.n, "buffer length must match plan");
        for k in 0..self.n {
            let r = self.reversed[k];
            if r > k {
                data.swap(k, r);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let stride = self.n / size;
            for start in (0..self.n).step_by(size) {
                for j in 0..half {
                    let mut w = self.twiddles[j * stride];
                    if inverse {
                        w.q = -w.q;
                    }
                    let t = w.mul(data[start + j + half]);
                    let u = data[start + j];
                    data[start + j] = u.add(t);
                    data[start + j + half] = u.sub(t);
                }
            }
            size *= 2;
        }
    }

    pub fn forward(&self, data: &mut [Sample]) {
        self.transform(data, false);
    }

    /// Inverse transform including the 1/N scale.
    pub fn inverse(&self, data: &mut [Sample]) {
        self.transform(data, true);
        let k = 1.0 / self.n as f64;
        for s in data.iter_mut() {
            *s = s.scale(k);
        }
    }
}

/// Free-standing transforms accept any power of two up to the largest unit
/// length; units are limited to [`SUPPORTED_LENGTHS`].
fn check_free_length(n: usize) -> Result<(), FftError> {
    if n.is_power_of_two() && n <= 2048 {
        Ok(())
    } else {
        Err(FftError::UnsupportedLength(n))
    }
}

pub fn fft(x: &[Sample]) -> Result<Vec<Sample>, FftError> {
    check_free_length(x.len())?;
    let plan = FftPlan::new(x.len())?;
    let mut out = x.to_vec();
    plan.forward(&mut out);
    Ok(out)
}

pub fn ifft(x: &[Sample]) -> Result<Vec<Sample>, FftError> {
    check_free_length(x.len())?;
    let plan = FftPlan::new(x.len())?;
    let mut out = x.to_vec();
    plan.inverse(&mut out);
    Ok(out)
}
