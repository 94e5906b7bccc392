//! Runs one 802.11g-style frame through the built-in blocks, transmitter then
//! receiver, without threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use sdrplane::dsp::default_catalog;
use sdrplane::unit::{bits_to_samples, samples_to_bits};

fn main() {
    let catalog = default_catalog();
    let stages: [(&str, &[(&str, u32)]); 8] = [
        ("crc", &[]),
        ("coder", &[("rate", 0)]),
        ("qam", &[("order", 4), ("symbols", 64)]),
        ("ifft", &[("length", 64)]),
        ("fft", &[("length", 64)]),
        ("qam_demap", &[("order", 4), ("symbols", 64)]),
        ("viterbi", &[("rate", 0)]),
        ("crc_check", &[]),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let bits: Vec<u8> = (0..1496).map(|_| rng.gen_range(0..2)).collect();
    let mut x = bits_to_samples(&bits);
    for (kind, params) in stages {
        let p: BTreeMap<String, u32> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let mut unit = catalog.create_unit(kind, &p).unwrap();
        x = unit.process_burst(&x).unwrap();
        println!("{kind:>10}: {} samples", x.len());
    }
    let out = samples_to_bits(&x);
    println!("payload recovered: {}, crc ok: {}", out[..1496] == bits[..], out[1496] == 1);
}
