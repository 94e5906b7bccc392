//! CPRI-style fronthaul rates for common carrier configurations.

use sdrplane::chain::{format_rate, fronthaul_rate};

fn main() {
    let cases = [
        ("LTE 20 MHz 2x2", 2, 30.72e6, 15),
        ("LTE 20 MHz 8x8", 8, 30.72e6, 15),
        ("802.11g", 1, 20e6, 16),
        ("802.11n 40 MHz 2x2", 2, 40e6, 16),
    ];
    for (name, antennas, rate, bits) in cases {
        let (plain, human) = format_rate(fronthaul_rate(antennas, rate, bits).unwrap());
        println!("{name:<20} {plain} b/s ({human})");
    }
    println!("zero antennas: {}", fronthaul_rate(0, 30.72e6, 15).unwrap_err());
}
