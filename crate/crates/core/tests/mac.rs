mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::Rng;
use sdrplane::dsp::default_catalog;
use sdrplane::mac::{Completion, Mac, MacConfig, Ticket};
use sdrplane::unit::{Link, UnitRunner};

/// A MAC over a one-unit pass-through chain.
fn identity_mac(config: MacConfig) -> (Mac, UnitRunner) {
    let (tx, rx) = (Link::new(4096).unwrap(), Link::new(4096).unwrap());
    let unit = default_catalog()
        .create_unit(
            "passthrough",
            &BTreeMap::from([("window".to_string(), config.block_bits as u32)]),
        )
        .unwrap();
    let runner = UnitRunner::spawn("identity", unit, vec![tx.clone()], vec![rx.clone()]);
    (Mac::attach(tx, rx, config), runner)
}

fn send_all(mac: &Mac, packets: &[Vec<u8>]) -> Vec<Ticket> {
    packets
        .iter()
        .map(|p| loop {
            match mac.send_packet(p, p.len()) {
                Ok(t) => break t,
                Err(e) if e.code() == "RingFull" => std::thread::sleep(Duration::from_millis(1)),
                Err(e) => panic!("{e}"),
            }
        })
        .collect()
}

fn wait_for(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn exactly_once_in_order_and_intact(n in 1usize..60, seed in any::<u64>()) {
        let config = MacConfig { tx_slots: 8, ..MacConfig::default() };
        let (mac, _runner) = identity_mac(config);
        let mut r = common::rng(seed);
        let packets: Vec<Vec<u8>> = (0..n)
            .map(|_| {
                let len = r.gen_range(0..=config.slot_bytes);
                (0..len).map(|_| r.gen()).collect()
            })
            .collect();
        let posted: Vec<Ticket> = (0..n)
            .map(|_| mac.receive_packet(vec![0; config.slot_bytes], config.slot_bytes).unwrap())
            .collect();
        let sent = send_all(&mac, &packets);

        let mut sent_done = Vec::new();
        let mut received = Vec::new();
        while sent_done.len() < n || received.len() < n {
            match mac.poll_completion(Duration::from_secs(30)).expect("completion") {
                Completion::Sent { ticket } => sent_done.push(ticket),
                c @ Completion::Received { .. } => {
                    received.push((c.ticket(), c.payload().unwrap().to_vec()));
                }
            }
        }
        prop_assert!(mac.poll_completion(Duration::from_millis(50)).is_none());
        prop_assert_eq!(&sent_done, &sent);
        let (tickets, payloads): (Vec<_>, Vec<_>) = received.into_iter().unzip();
        prop_assert_eq!(tickets, posted);
        prop_assert_eq!(payloads, packets);
        let st = mac.stats();
        prop_assert_eq!((st.sent_irqs, st.received_irqs, st.dropped, st.corrupt), (n as u64, n as u64, 0, 0));
    }

    #[test]
    fn overflow_conserves_arrivals(n in 1usize..40, ring in 1usize..6, late in 0usize..10) {
        let config = MacConfig { rx_slots: ring, slot_bytes: 200, ..MacConfig::default() };
        let (mac, _runner) = identity_mac(config);
        let packets: Vec<Vec<u8>> = (0..n).map(|i| vec![i as u8; i % 200]).collect();
        send_all(&mac, &packets);
        wait_for(|| mac.stats().arrivals == n as u64);
        let st = mac.stats();
        prop_assert_eq!(st.arrivals, st.delivered + st.dropped + st.rx_ring);
        prop_assert_eq!(st.rx_ring as usize, n.min(ring));
        prop_assert_eq!(st.dropped as usize, n.saturating_sub(ring));

        // Buffers posted now drain the ring oldest first.
        let mut got = Vec::new();
        for _ in 0..late {
            mac.receive_packet(vec![0; 200], 200).unwrap();
        }
        while let Some(c) = mac.poll_completion(Duration::from_millis(100)) {
            if let Some(p) = c.payload() {
                got.push(p.to_vec());
            }
        }
        let kept = &packets[n.saturating_sub(ring)..];
        prop_assert_eq!(&got[..], &kept[..late.min(kept.len())]);
        let st = mac.stats();
        prop_assert_eq!(st.arrivals, st.delivered + st.dropped + st.rx_ring);
    }
}

#[test]
fn callbacks_fire_once_per_ticket() {
    let (mac, _runner) = identity_mac(MacConfig::default());
    let seen: Arc<Mutex<Vec<Ticket>>> = Arc::default();
    {
        let seen = Arc::clone(&seen);
        mac.set_callback(Box::new(move |c| seen.lock().unwrap().push(c.ticket())));
    }
    let mut tickets: Vec<Ticket> = (0..25)
        .map(|_| mac.receive_packet(vec![0; 64], 64).unwrap())
        .collect();
    tickets.extend(send_all(&mac, &vec![vec![7u8; 64]; 25]));
    wait_for(|| seen.lock().unwrap().len() >= 50);
    std::thread::sleep(Duration::from_millis(50));
    let mut got = seen.lock().unwrap().clone();
    got.sort();
    tickets.sort();
    assert_eq!(got, tickets);
    assert!(mac.try_completion().is_none());
}

#[test]
fn close_cancels_outstanding_buffers() {
    let (mut mac, _runner) = identity_mac(MacConfig::default());
    for _ in 0..5 {
        mac.receive_packet(vec![0; 16], 16).unwrap();
    }
    mac.close();
    let st = mac.stats();
    assert_eq!((st.cancelled, st.received_irqs, st.posted), (5, 0, 0));
    assert!(mac.poll_completion(Duration::from_millis(50)).is_none());
    assert_eq!(mac.send_packet(&[1], 1).unwrap_err().code(), "Closed");
    assert_eq!(mac.receive_packet(vec![0; 1], 1).unwrap_err().code(), "Closed");
}

#[test]
fn send_rejects_bad_sizes() {
    let config = MacConfig { slot_bytes: 100, ..MacConfig::default() };
    let (mac, _runner) = identity_mac(config);
    assert_eq!(mac.send_packet(&[0; 101], 101).unwrap_err().code(), "OversizePacket");
    assert_eq!(mac.send_packet(&[0; 10], 11).unwrap_err().code(), "BufferTooSmall");
    assert_eq!(mac.receive_packet(vec![0; 10], 11).unwrap_err().code(), "BufferTooSmall");
}
