//! Tunes the mocked RF front end and measures the SNR of its AWGN loopback.

use sdrplane::rf::{loopback, mean_power, ChannelModel, RfFrontend, RfParam};
use sdrplane::unit::Sample;

fn main() {
    let rf = RfFrontend::new();
    for (name, v) in [("lo_freq_hz", 2.4121e9), ("filter_bw_hz", 20e6), ("pa_gain_db", 10.1), ("lna_gain_db", 30.4)] {
        let ack = rf.set_rf_param(name, v).unwrap();
        println!("{name}: asked {} got {}", ack.requested, ack.applied);
    }
    println!("out of range: {:?}", rf.set_rf_param("pa_gain_db", 95.0).unwrap_err());
    for p in RfParam::ALL {
        let (min, max, step) = p.grid();
        println!("{:>13} grid {min}..={max} step {step}", p.name());
    }

    let x: Vec<Sample> = (0..100_000).map(|k| Sample::new((k as f64 * 0.1).cos(), (k as f64 * 0.1).sin())).collect();
    for snr_db in [0.0, 10.0, 30.0] {
        let y = loopback(&x, ChannelModel::Awgn { snr_db, seed: 7 });
        let noise: Vec<Sample> = y.iter().zip(&x).map(|(a, b)| a.sub(*b)).collect();
        let measured = 10.0 * (mean_power(&x) / mean_power(&noise)).log10();
        println!("awgn {snr_db:>4} dB -> measured {measured:.3} dB");
    }
}
