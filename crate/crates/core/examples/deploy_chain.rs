//! Admits the transmitter chain from `chains/`, streams one frame of bits
//! through it and prints the admission report and chain listing.

use std::time::Duration;

use sdrplane::chain::ChainManager;
use sdrplane::unit::bits_to_samples;

fn main() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/chains/tx80211g.chain")).unwrap();
    let m = ChainManager::with_defaults(0);
    let (id, report) = m.deploy_text(&text).unwrap();
    println!("{id}: admitted {}", report.admitted());
    for t in &report.throughput {
        println!("  {} needs {:.1} Msps, has {:.1}", t.instance, t.demanded_sps / 1e6, t.available_sps / 1e6);
    }
    for l in &report.latency {
        println!("  critical path {:.3} us via {}", l.critical_path_s * 1e6, l.path.join(" > "));
    }

    let io = m.io(&id).unwrap();
    io.input(0).unwrap().push_slice(&bits_to_samples(&[1u8; 1496])).unwrap();
    let symbols = io.read(0, 1536, Duration::from_secs(5));
    println!("one frame -> {} time-domain samples", symbols.len());

    let budget = m.budget();
    println!("cells {}/{}  dsp {}/{}", budget.cells_allocated, budget.cells_total, budget.dsp_allocated, budget.dsp_total);
    println!("{}", serde_json::to_string_pretty(&m.list()).unwrap());

    // Copies run side by side; fabric resources cap how many fit.
    let mut n = 1;
    while m.deploy_text(&text).is_ok() {
        n += 1;
    }
    println!("{n} copies fit on the default platform");
    m.teardown_all();
}
