//! Routes CHDR packets between endpoints on one crossbar and pushes two flows
//! through a time-shared unit.

use std::collections::BTreeMap;
use std::time::Duration;

use sdrplane::crossbar::{packetize_burst, Crossbar, SharedUnit};
use sdrplane::dsp::default_catalog;
use sdrplane::framing::{ChdrPacket, EndpointAddr, SequenceCounter, StreamId};
use sdrplane::unit::{decode_samples, Sample};

fn main() {
    let xb = Crossbar::new(1);
    let a = xb.attach_endpoint(Some(10), 16).unwrap();
    let b = xb.attach_endpoint(Some(11), 16).unwrap();
    a.send(ChdrPacket::data(StreamId::between(a.addr(), b.addr()), 0, true, b"hello".to_vec()))
        .unwrap();
    let p = b.recv_timeout(Duration::from_secs(1)).unwrap().unwrap();
    println!("{} got {:?}", b.addr(), String::from_utf8_lossy(&p.payload));
    // Nothing listens on endpoint 99.
    let lost = xb.route(ChdrPacket::data(StreamId::between(a.addr(), EndpointAddr::new(1, 99)), 0, true, vec![]));
    println!("unrouted: {lost:?}");

    let unit = default_catalog()
        .create_unit("passthrough", &BTreeMap::from([("window".to_string(), 16)]))
        .unwrap();
    let shared = SharedUnit::spawn(&xb, Some(1), unit, 64).unwrap();
    for (ep, tag) in [(&a, 1.0), (&b, 2.0)] {
        let burst: Vec<Sample> = (0..48).map(|k| Sample::new(tag, k as f64)).collect();
        let mut seq = SequenceCounter::default();
        for p in packetize_burst(StreamId::between(ep.addr(), shared.addr()), &mut seq, &burst) {
            ep.send(p).unwrap();
        }
    }
    for ep in [&a, &b] {
        let mut back = Vec::new();
        loop {
            let p = ep.recv_timeout(Duration::from_secs(1)).unwrap().unwrap();
            back.extend(decode_samples(&p.payload).unwrap());
            if p.header.end_of_burst {
                break;
            }
        }
        println!("{} burst back: {} samples tagged {}", ep.addr(), back.len(), back[0].i);
    }
    println!("{:#?}", xb.stats());
    println!("{:?}", shared.stats());
}
