//! Two nodes in one process joined over TCP. The middle unit of a chain is
//! placed on the far node and the output matches a single-node run.

use std::sync::Arc;
use std::time::Duration;

use sdrplane::chain::ChainManager;
use sdrplane::cluster::{connect, ClusterListener};
use sdrplane::crossbar::RouteKey;
use sdrplane::unit::Sample;

const CHAIN: &str = r#"
[chain]
name = "split"
sample_rate_sps = 1e6

[[unit]]
name = "a"
kind = "passthrough"

[[unit]]
name = "b"
kind = "fft"
params = { length = 64 }
NODE

[[unit]]
name = "c"
kind = "ifft"
params = { length = 64 }

[[link]]
src = "a"
dst = "b"
via = "crossbar"

[[link]]
src = "b"
dst = "c"
via = "crossbar"
"#;

fn run(m: &ChainManager, text: &str, x: &[Sample]) -> Vec<Sample> {
    let (id, _) = m.deploy_text(text).unwrap();
    let io = m.io(&id).unwrap();
    io.input(0).unwrap().push_slice(x).unwrap();
    let y = io.read(0, x.len(), Duration::from_secs(10));
    m.teardown(&id).unwrap();
    y
}

fn main() {
    let x: Vec<Sample> = (0..64 * 32).map(|k| Sample::new((k % 7) as f64, (k % 5) as f64)).collect();
    let golden = run(&ChainManager::with_defaults(1), &CHAIN.replace("NODE", ""), &x);

    let near = ChainManager::with_defaults(1);
    let far = ChainManager::with_defaults(2);
    let server = ClusterListener::bind("127.0.0.1:0", far.crossbar()).unwrap().serve();
    let link = connect(&server.local_addr().to_string(), near.crossbar()).unwrap();
    while !far.crossbar().has_route(RouteKey::Device(1)) {
        std::thread::sleep(Duration::from_millis(5));
    }
    near.add_peer(2, Arc::new(far.clone()));
    let split = run(&near, &CHAIN.replace("NODE", "node = 2"), &x);

    println!("{} samples, identical to single node: {}", split.len(), split == golden);
    println!("{:?}", link.stats());
}
