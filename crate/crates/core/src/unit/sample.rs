use serde::{Deserialize, Serialize};

/// Wire width of one sample inside CHDR data payloads: big-endian f64 I then Q.
pub const SAMPLE_WIRE_BYTES: usize = 16;

/// One complex baseband sample. Bit-domain ports carry one bit per item in
/// the in-phase component (0.0 or 1.0) with a zero quadrature part.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub i: f64,
    pub q: f64,
}

impl Sample {
    pub const ZERO: Sample = Sample { i: 0.0, q: 0.0 };

    pub const fn new(i: f64, q: f64) -> Self {
        Self { i, q }
    }

    pub fn from_bit(bit: u8) -> Self {
        Self {
            i: if bit != 0 { 1.0 } else { 0.0 },
            q: 0.0,
        }
    }

    pub fn bit(&self) -> u8 {
        (self.i > 0.5) as u8
    }

    pub fn is_finite(&self) -> bool {
        self.i.is_finite() && self.q.is_finite()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.i * self.i + self.q * self.q
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.i * k, self.q * k)
    }

    pub fn add(&self, o: Sample) -> Self {
        Self::new(self.i + o.i, self.q + o.q)
    }

    pub fn sub(&self, o: Sample) -> Self {
        Self::new(self.i - o.i, self.q - o.q)
    }

    pub fn mul(&self, o: Sample) -> Self {
        Self::new(self.i * o.i - self.q * o.q, self.i * o.q + self.q * o.i)
    }
}

pub fn bits_to_samples(bits: &[u8]) -> Vec<Sample> {
    bits.iter().map(|&b| Sample::from_bit(b)).collect()
}

pub fn samples_to_bits(samples: &[Sample]) -> Vec<u8> {
    samples.iter().map(Sample::bit).collect()
}

/// Bytes to bits, most significant bit first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1))
        .collect()
}

/// Bits to bytes, most significant bit first. A trailing partial byte is
/// zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | ((b & 1) << (7 - k))))
        .collect()
}

pub fn encode_samples(samples: &[Sample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * SAMPLE_WIRE_BYTES);
    for s in samples {
        out.extend_from_slice(&s.i.to_be_bytes());
        out.extend_from_slice(&s.q.to_be_bytes());
    }
    out
}

/// Decodes a CHDR data payload. `None` when the length is not a multiple of
/// the sample width or a value is not finite.
pub fn decode_samples(bytes: &[u8]) -> Option<Vec<Sample>> {
    if !bytes.len().is_multiple_of(SAMPLE_WIRE_BYTES) {
        return None;
    }
    bytes
        .chunks_exact(SAMPLE_WIRE_BYTES)
        .map(|c| {
            let s = Sample::new(
                f64::from_be_bytes(c[..8].try_into().unwrap()),
                f64::from_be_bytes(c[8..].try_into().unwrap()),
            );
            s.is_finite().then_some(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_packing_is_msb_first() {
        assert_eq!(bytes_to_bits(&[0b1000_0001]), vec![1, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(bits_to_bytes(&[1, 0, 1]), vec![0b1010_0000]);
    }

    #[test]
    fn sample_payload_width_checked() {
        let s = [Sample::new(1.5, -2.0), Sample::new(f64::MIN_POSITIVE, 0.0)];
        let bytes = encode_samples(&s);
        assert_eq!(bytes.len(), 32);
        assert_eq!(decode_samples(&bytes).unwrap(), s);
        assert!(decode_samples(&bytes[..31]).is_none());
        let nan = encode_samples(&[Sample::new(f64::NAN, 0.0)]);
        assert!(decode_samples(&nan).is_none());
    }
}
