//! Starts a node with its control service and drives it as a client would.

use std::sync::Arc;
use std::time::Duration;

use serde_json::json;
use sdrplane::control::{ControlClient, ControlServer, Node};

fn main() {
    let server = ControlServer::bind("127.0.0.1:0", Arc::new(Node::new(1))).unwrap();
    let addr = server.local_addr().to_string();
    println!("control on {addr}");

    let mut events = ControlClient::connect(&addr).unwrap();
    events.call("subscribe", json!({})).unwrap();

    let mut c = ControlClient::connect(&addr).unwrap();
    let spec = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/chains/tx80211g.chain")).unwrap();
    let deployed = c.call("deploy", json!({ "spec": spec })).unwrap();
    let id = deployed["id"].as_str().unwrap().to_string();
    println!("deployed {id}");
    c.call("set-param", json!({ "chain": id, "unit": "qam0", "register": "order", "value": 16 })).unwrap();
    println!("{}", c.call("get-param", json!({ "chain": id, "unit": "qam0", "register": "order" })).unwrap());
    println!("{}", c.call("rf-set", json!({ "param": "lo_freq_hz", "value": 5.18e9 })).unwrap());
    println!("{}", c.call("fronthaul-rate", json!({ "antennas": 2, "rate": 20e6, "bits": 16 })).unwrap());
    match c.call("teardown", json!({ "chain": "nosuch" })) {
        Err(e) => println!("teardown nosuch -> {}", e.code()),
        Ok(v) => println!("unexpected {v}"),
    }
    let raw = c.send_raw(b"not json").unwrap();
    println!("raw garbage -> {}", serde_json::to_string(&raw).unwrap());
    c.call("teardown", json!({ "chain": id })).unwrap();

    while let Some(ev) = events.next_event(Duration::from_millis(300)).unwrap() {
        println!("event {}", serde_json::to_string(&ev).unwrap());
    }
}
