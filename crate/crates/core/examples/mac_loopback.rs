//! Sends packets through the MAC into the transmit-and-receive chain over an
//! identity channel and collects the completions.

use std::time::Duration;

use sdrplane::chain::ChainManager;
use sdrplane::mac::{Completion, Mac, MacConfig};

fn main() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/chains/trx80211g.chain")).unwrap();
    let m = ChainManager::with_defaults(0);
    let (id, _) = m.deploy_text(&text).unwrap();
    let io = m.io(&id).unwrap();
    let config = MacConfig { checked: true, ..MacConfig::default() };
    let mac = Mac::attach(io.input(0).unwrap(), io.output(0).unwrap(), config);

    let packets: Vec<Vec<u8>> = (0..20u8).map(|k| vec![k; 100 + 40 * k as usize]).collect();
    for _ in &packets {
        mac.receive_packet(vec![0; config.slot_bytes], config.slot_bytes).unwrap();
    }
    for p in &packets {
        let t = mac.send_packet(p, p.len()).unwrap();
        println!("queued {} bytes as {t:?}", p.len());
    }
    let mut received = 0;
    while received < packets.len() {
        match mac.poll_completion(Duration::from_secs(10)).expect("completion") {
            Completion::Sent { ticket } => println!("sent {ticket:?}"),
            c @ Completion::Received { .. } => {
                let got = c.payload().unwrap();
                assert_eq!(got, packets[received].as_slice());
                println!("received {:?}: {} bytes intact", c.ticket(), got.len());
                received += 1;
            }
        }
    }
    println!("{:#?}", mac.stats());
}
