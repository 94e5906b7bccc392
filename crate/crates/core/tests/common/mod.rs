//! Reference models shared by the integration tests. Each one is written
//! from the textbook definition, independent of the library code.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdrplane::chain::ChainIo;
use sdrplane::dsp::{register_defaults, CodeRate, PassThroughKind};
use sdrplane::unit::{Catalog, RegisterSpec, Sample, UnitDescriptor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_samples(r: &mut impl Rng, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
        .collect()
}

pub fn random_bits(r: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| r.gen_range(0..2u8)).collect()
}

/// X[k] = sum_n x[n] exp(-2 pi i k n / N), evaluated term by term.
pub fn naive_dft(x: &[Sample]) -> Vec<Sample> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, s) in x.iter().enumerate() {
                let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                let (sin, cos) = a.sin_cos();
                re += s.i * cos - s.q * sin;
                im += s.i * sin + s.q * cos;
            }
            Sample::new(re, im)
        })
        .collect()
}

/// Largest |a - b| over the vector divided by the largest |b|.
pub fn rel_err(a: &[Sample], b: &[Sample]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.sub(*y).norm_sqr().sqrt())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.norm_sqr().sqrt()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn reflect_bits(v: u32, width: u32) -> u32 {
    (0..width).fold(0, |acc, i| acc | (((v >> i) & 1) << (width - 1 - i)))
}

/// Bit-serial CRC-32: shifts one message bit at a time through the
/// polynomial division register.
pub fn crc32_bitwise(data: &[u8], poly: u32, init: u32, xorout: u32, reflect: bool) -> u32 {
    let mut reg = init;
    for &byte in data {
        let b = if reflect { reflect_bits(byte as u32, 8) } else { byte as u32 };
        for i in (0..8).rev() {
            let bit = (b >> i) & 1;
            let top = reg >> 31;
            reg <<= 1;
            if top ^ bit == 1 {
                reg ^= poly;
            }
        }
    }
    let out = if reflect { reflect_bits(reg, 32) } else { reg };
    out ^ xorout
}

/// Generator taps, index 0 = current input bit.
const TAPS_A: [u8; 7] = [1, 0, 1, 1, 0, 1, 1]; // 133 octal
const TAPS_B: [u8; 7] = [1, 1, 1, 1, 0, 0, 1]; // 171 octal

/// Trellis for the K=7 code: for each of 64 states (the last six inputs,
/// most recent first) and input bit, the next state and the output pair.
pub fn trellis() -> Vec<[(usize, u8, u8); 2]> {
    (0..64usize)
        .map(|state| {
            let mut row = [(0usize, 0u8, 0u8); 2];
            for u in 0..2u8 {
                let mut window = [0u8; 7];
                window[0] = u;
                for k in 1..7 {
                    window[k] = ((state >> (k - 1)) & 1) as u8;
                }
                let a = window.iter().zip(TAPS_A).map(|(w, t)| w & t).sum::<u8>() & 1;
                let b = window.iter().zip(TAPS_B).map(|(w, t)| w & t).sum::<u8>() & 1;
                let next = ((state << 1) | u as usize) & 63;
                row[u as usize] = (next, a, b);
            }
            row
        })
        .collect()
}

/// Walks the trellis from state 0 with six zero tail bits, then applies the
/// 802.11 puncturing patterns.
pub fn trellis_encode(bits: &[u8], rate: CodeRate, table: &[[(usize, u8, u8); 2]]) -> Vec<u8> {
    let mut state = 0usize;
    let mut mother = Vec::new();
    for &u in bits.iter().chain([0u8; 6].iter()) {
        let (next, a, b) = table[state][u as usize];
        mother.push((a, b));
        state = next;
    }
    let mut out = Vec::new();
    for (t, (a, b)) in mother.into_iter().enumerate() {
        // Per period of input bits: which of A, B survive.
        let (keep_a, keep_b) = match rate {
            CodeRate::Half => (true, true),
            CodeRate::TwoThirds => (true, t % 2 == 0),
            CodeRate::ThreeQuarters => match t % 3 {
                0 => (true, true),
                1 => (true, false),
                _ => (false, true),
            },
        };
        if keep_a {
            out.push(a);
        }
        if keep_b {
            out.push(b);
        }
    }
    out
}

/// Pass-through kind with modeled figures, window register defaulting to 64.
pub fn modeled_kind(name: &str, throughput_sps: f64, latency_cycles: u64, cells: u64, dsp: u64) -> UnitDescriptor {
    UnitDescriptor {
        kind: name.into(),
        n_inputs: 1,
        n_outputs: 1,
        samples_in_per_step: 64,
        samples_out_per_step: 64,
        throughput_sps,
        latency_cycles,
        cycles_per_step: 1,
        cost_logic_cells: cells,
        cost_dsp_slices: dsp,
        register_map: vec![RegisterSpec::new(0, "window", 1, 65536, 64)],
    }
}

/// Built-in kinds plus `extra` modeled pass-through kinds.
pub fn catalog_with(extra: &[UnitDescriptor]) -> Arc<Catalog> {
    let c = Catalog::new();
    register_defaults(&c).unwrap();
    for d in extra {
        c.register_kind(d.clone(), Arc::new(PassThroughKind)).unwrap();
    }
    Arc::new(c)
}

/// A straight chain of `(unit name, kind)` joined by direct links.
pub fn line_chain(name: &str, rate_sps: f64, budget_us: Option<f64>, units: &[(&str, &str)]) -> String {
    let mut s = format!("[chain]\nname = \"{name}\"\nsample_rate_sps = {rate_sps:e}\n");
    if let Some(b) = budget_us {
        s += &format!("latency_budget_us = {b:?}\n");
    }
    for (u, k) in units {
        s += &format!("[[unit]]\nname = \"{u}\"\nkind = \"{k}\"\n");
    }
    for w in units.windows(2) {
        s += &format!("[[link]]\nsrc = \"{}\"\ndst = \"{}\"\n", w[0].0, w[1].0);
    }
    s
}

/// Pushes `x` into a chain's first input and reads as many samples back.
pub fn stream(io: &ChainIo, x: &[Sample]) -> Vec<Sample> {
    let input = io.input(0).unwrap();
    let feed = {
        let x = x.to_vec();
        std::thread::spawn(move || input.push_slice(&x).unwrap())
    };
    let out = io.read(0, x.len(), std::time::Duration::from_secs(30));
    feed.join().unwrap();
    out
}
