//! The three reconfiguration paths: a live register write, a partial region
//! swap and a full reload, with the modeled pause of each.

use std::collections::BTreeMap;

use sdrplane::chain::{ChainManager, PlatformModel, UnitSpec};
use sdrplane::crossbar::Crossbar;
use sdrplane::dsp::default_catalog;

const CHAIN: &str = r#"
[chain]
name = "rx"
sample_rate_sps = 20e6

[[unit]]
name = "front"
kind = "passthrough"

[[unit]]
name = "slot"
kind = "fft"
params = { length = 64 }
prr = "p0"

[[link]]
src = "front"
dst = "slot"
"#;

fn main() {
    let m = ChainManager::new(
        default_catalog(),
        PlatformModel::default().with_prr("p0", 8000, 32),
        Crossbar::new(0),
    );
    // Skip the modeled pauses in wall-clock time.
    m.set_time_scale(0.0);
    let (id, _) = m.deploy_text(CHAIN).unwrap();

    m.set_param(&id, "front", "window", 128).unwrap();
    println!("front.window = {}", m.get_param(&id, "front", "window").unwrap());

    let occupant = UnitSpec {
        name: String::new(),
        kind: "ifft".into(),
        params: BTreeMap::from([("length".to_string(), 64)]),
        prr: None,
        node: None,
        share: None,
        clock: None,
    };
    let r = m.reconfigure_prr("p0", &occupant, 1_280_000).unwrap();
    println!("prr swap into {}: {:.4} s", r.chain, r.swap_time_s);
    println!("{:?}", m.prrs());

    let graph = m.graph(&id).unwrap();
    let r = m.reconfigure_full(vec![graph], 32_000_000).unwrap();
    println!("full reload: {:.4} s, {} torn down, {} redeployed", r.downtime_s, r.torn_down.len(), r.deployed.len());
}
