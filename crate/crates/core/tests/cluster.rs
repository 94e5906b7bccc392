mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use sdrplane::chain::ChainManager;
use sdrplane::cluster::{connect, decode_frame, encode_frame, ClusterListener, FrameDecoder, MAX_FRAME_BYTES};
use sdrplane::crossbar::{Crossbar, RouteKey};
use sdrplane::framing::{ChdrPacket, EndpointAddr, PacketType, StreamId};

fn packet() -> impl Strategy<Value = ChdrPacket> {
    (
        0u8..4,
        any::<u32>(),
        0u16..4096,
        any::<bool>(),
        prop::option::of(any::<u64>()),
        prop::collection::vec(any::<u8>(), 0..1500),
    )
        .prop_map(|(t, sid, seq, eob, ts, payload)| {
            let ty = [PacketType::Data, PacketType::FlowControl, PacketType::Command, PacketType::Response][t as usize];
            ChdrPacket::new(ty, sdrplane::framing::unpack_sid(sid), seq, eob, ts, payload)
        })
}

proptest! {
    #[test]
    fn any_chunking_gives_back_the_frames(
        packets in prop::collection::vec(packet(), 1..20),
        cuts in prop::collection::vec(1usize..700, 1..60),
    ) {
        let mut stream = Vec::new();
        for (i, p) in packets.iter().enumerate() {
            stream.extend(encode_frame(p, i as u8).unwrap());
        }
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        let mut at = 0;
        let mut k = 0;
        while at < stream.len() {
            let n = cuts[k % cuts.len()].min(stream.len() - at);
            k += 1;
            dec.push(&stream[at..at + n]);
            at += n;
            while let Some(body) = dec.next_frame().unwrap() {
                got.push(decode_frame(&body).unwrap());
            }
        }
        prop_assert_eq!(dec.buffered(), 0);
        prop_assert_eq!(got, packets);
    }
}

#[test]
fn oversize_length_prefix_is_a_framing_error() {
    let mut dec = FrameDecoder::new();
    dec.push(&((MAX_FRAME_BYTES + 1) as u32).to_be_bytes());
    assert_eq!(dec.next_frame().unwrap_err().code(), "Framing");
    let mut dec = FrameDecoder::new();
    dec.push(&[0, 0, 0, 8, 0x14, 0, 0, 1, 0, 0, 0, 0]);
    let body = dec.next_frame().unwrap().unwrap();
    assert!(decode_frame(&body).is_err());
}

#[test]
fn hundred_thousand_packets_cross_intact() {
    let a = Crossbar::new(1);
    let b = Crossbar::new(2);
    let server = ClusterListener::bind("127.0.0.1:0", &b).unwrap().serve();
    let link = connect(&server.local_addr().to_string(), &a).unwrap();
    let sink = b.attach_endpoint(Some(7), 1024).unwrap();
    let sid = StreamId::between(EndpointAddr::new(1, 3), sink.addr());
    const N: u32 = 100_000;
    let rx = std::thread::spawn(move || {
        for k in 0..N {
            let p = sink.recv_timeout(Duration::from_secs(20)).unwrap().expect("packet");
            assert_eq!(p.header.sequence, (k % 4096) as u16);
            assert_eq!(p.payload, k.to_be_bytes());
        }
        assert!(sink.recv_timeout(Duration::from_millis(100)).unwrap().is_none());
    });
    for k in 0..N {
        a.route(ChdrPacket::data(sid, (k % 4096) as u16, k % 7 == 0, k.to_be_bytes().to_vec()))
            .unwrap();
    }
    rx.join().unwrap();
    let far = server.links()[0].stats();
    let near = link.stats();
    assert_eq!((near.tx_frames, far.rx_frames), (N as u64, N as u64));
    assert_eq!(near.tx_bytes, far.rx_bytes);
    assert_eq!(far.rx_errors, 0);
    let (sa, sb) = (a.stats(), b.stats());
    assert_eq!((sa.packets_in, sa.delivered, sa.dropped()), (N as u64, N as u64, 0));
    assert_eq!((sb.packets_in, sb.delivered, sb.dropped()), (N as u64, N as u64, 0));
}

const SPLIT: &str = "[chain]\nname = \"split\"\nsample_rate_sps = 1e6\n\
    [[unit]]\nname = \"a\"\nkind = \"passthrough\"\nparams = { window = 64 }\n\
    [[unit]]\nname = \"b\"\nkind = \"fft\"\nparams = { length = 64 }\nNODE\n\
    [[unit]]\nname = \"c\"\nkind = \"ifft\"\nparams = { length = 64 }\n\
    [[link]]\nsrc = \"a\"\ndst = \"b\"\nvia = \"crossbar\"\n\
    [[link]]\nsrc = \"b\"\ndst = \"c\"\nvia = \"crossbar\"\n";

fn wait_until(cond: impl Fn() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn split_chain_matches_single_node() {
    let x = common::random_samples(&mut common::rng(11), 64 * 300);

    let single = ChainManager::with_defaults(1);
    let (id, _) = single.deploy_text(&SPLIT.replace("NODE", "")).unwrap();
    let golden = common::stream(&single.io(&id).unwrap(), &x);

    let a = ChainManager::with_defaults(1);
    let b = ChainManager::with_defaults(2);
    let server = ClusterListener::bind("127.0.0.1:0", b.crossbar()).unwrap().serve();
    let _link = connect(&server.local_addr().to_string(), a.crossbar()).unwrap();
    wait_until(|| b.crossbar().has_route(RouteKey::Device(1)));
    a.add_peer(2, Arc::new(b.clone()));
    let (id, report) = a.deploy_text(&SPLIT.replace("NODE", "node = 2")).unwrap();
    assert!(report.remote_ok());
    assert_eq!(b.hosted().len(), 1);
    let split = common::stream(&a.io(&id).unwrap(), &x);

    assert_eq!(split.len(), golden.len());
    assert!(split == golden, "split output differs from the single-node run");
    assert!(server.links()[0].stats().rx_frames > 0);
    a.teardown(&id).unwrap();
    assert!(b.hosted().is_empty());
}
