//! Gray-coded square constellations (802.11 bit ordering) with unit mean
//! power. The first half of each symbol's bits selects I, the second half Q;
//! BPSK uses I only.

use thiserror::Error;

use crate::unit::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QamError {
    #[error("unsupported constellation order {0}")]
    UnsupportedOrder(u32),
    #[error("{len} bits is not a multiple of {bits_per_symbol}")]
    LengthNotMultiple { len: usize, bits_per_symbol: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Bpsk,
    Qpsk,
    Qam16,
    Qam64,
}

impl Order {
    pub fn from_points(order: u32) -> Result<Self, QamError> {
        match order {
            2 => Ok(Order::Bpsk),
            4 => Ok(Order::Qpsk),
            16 => Ok(Order::Qam16),
            64 => Ok(Order::Qam64),
            other => Err(QamError::UnsupportedOrder(other)),
        }
    }

    pub fn points(self) -> u32 {
        match self {
            Order::Bpsk => 2,
            Order::Qpsk => 4,
            Order::Qam16 => 16,
            Order::Qam64 => 64,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Order::Bpsk => 1,
            Order::Qpsk => 2,
            Order::Qam16 => 4,
            Order::Qam64 => 6,
        }
    }

    /// Scale giving unit average power.
    pub fn norm(self) -> f64 {
        match self {
            Order::Bpsk => 1.0,
            Order::Qpsk => 1.0 / 2f64.sqrt(),
            Order::Qam16 => 1.0 / 10f64.sqrt(),
            Order::Qam64 => 1.0 / 42f64.sqrt(),
        }
    }

    fn bits_per_axis(self) -> usize {
        match self {
            Order::Bpsk | Order::Qpsk => 1,
            Order::Qam16 => 2,
            Order::Qam64 => 3,
        }
    }
}

// Gray-coded axis levels indexed by the axis bits read MSB-first.
const LEVELS_1: [f64; 2] = [-1.0, 1.0];
const LEVELS_2: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];
const LEVELS_3: [f64; 8] = [-7.0, -5.0, -1.0, -3.0, 7.0, 5.0, 1.0, 3.0];

fn levels(bits: usize) -> &'static [f64] {
    match bits {
        1 => &LEVELS_1,
        2 => &LEVELS_2,
        _ => &LEVELS_3,
    }
}

fn axis_value(bits: &[u8]) -> f64 {
    let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
    levels(bits.len())[idx]
}

fn axis_bits(value: f64, nbits: usize, out: &mut Vec<u8>) {
    let table = levels(nbits);
    let best = (0..table.len())
        .min_by(|&a, &b| {
            (table[a] - value)
                .abs()
                .partial_cmp(&(table[b] - value).abs())
                .unwrap()
        })
        .unwrap();
    for k in (0..nbits).rev() {
        out.push(((best >> k) & 1) as u8);
    }
}

/// Maps exactly one symbol's bits.
pub fn map_symbol(bits: &[u8], order: Order) -> Sample {
    let k = order.norm();
    match order {
        Order::Bpsk => Sample::new(axis_value(&bits[..1]) * k, 0.0),
        _ => {
            let h = order.bits_per_axis();
            Sample::new(axis_value(&bits[..h]) * k, axis_value(&bits[h..2 * h]) * k)
        }
    }
}

pub fn demap_symbol(s: Sample, order: Order, out: &mut Vec<u8>) {
    let k = order.norm();
    match order {
        Order::Bpsk => axis_bits(s.i / k, 1, out),
        _ => {
            let h = order.bits_per_axis();
            axis_bits(s.i / k, h, out);
            axis_bits(s.q / k, h, out);
        }
    }
}

pub fn qam_map(bits: &[u8], order: u32) -> Result<Vec<Sample>, QamError> {
    let order = Order::from_points(order)?;
    let bps = order.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(QamError::LengthNotMultiple {
            len: bits.len(),
            bits_per_symbol: bps,
        });
    }
    Ok(bits.chunks_exact(bps).map(|c| map_symbol(c, order)).collect())
}

/// Hard-decision inverse of [`qam_map`].
pub fn qam_demap(symbols: &[Sample], order: u32) -> Result<Vec<u8>, QamError> {
    let order = Order::from_points(order)?;
    let mut out = Vec::with_capacity(symbols.len() * order.bits_per_symbol());
    for &s in symbols {
        demap_symbol(s, order, &mut out);
    }
    Ok(out)
}
