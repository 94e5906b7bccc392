use proptest::prelude::*;
use sdrplane::crossbar::packetize_burst;
use sdrplane::framing::chdr::sequence_delta;
use sdrplane::unit::Sample;
use sdrplane::framing::{
    decapsulate_vrt, encapsulate_vrt, pack_chdr, pack_sid, parse_hex_lines, unpack_chdr,
    unpack_sid, ChdrPacket, PacketType, SequenceCounter, StreamId, DEFAULT_MTU,
};

fn golden(name: &str) -> Vec<Vec<u8>> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_hex_lines(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn chdr_golden_vectors_decode() {
    let frames = golden("chdr_golden.txt");
    let expect = [
        ChdrPacket::new(PacketType::Data, StreamId::new(1, 2, 3, 4), 1, false, None, vec![0xde, 0xad, 0xbe, 0xef]),
        ChdrPacket::new(PacketType::Data, StreamId::new(10, 11, 12, 13), 4095, true, Some(0x1_0000_0002), vec![]),
        ChdrPacket::new(PacketType::Command, StreamId::new(1, 1, 2, 2), 5, false, None, vec![0, 0, 0, 4, 0, 0, 0, 42]),
        ChdrPacket::new(
            PacketType::Response,
            StreamId::new(2, 2, 1, 1),
            0x123,
            false,
            Some(0xfedc_ba98_7654_3210),
            vec![0; 4],
        ),
        ChdrPacket::new(PacketType::FlowControl, StreamId::new(255, 255, 255, 255), 0, true, None, vec![]),
    ];
    assert_eq!(frames.len(), expect.len());
    for (bytes, want) in frames.iter().zip(&expect) {
        assert_eq!(&unpack_chdr(bytes).unwrap(), want);
        assert_eq!(&pack_chdr(want).unwrap(), bytes);
    }
}

#[test]
fn vrt_golden_vectors_decode() {
    let frames = golden("vrt_golden.txt");
    let chdr = golden("chdr_golden.txt");
    let (body, meta) = decapsulate_vrt(&frames[0]).unwrap();
    assert_eq!(body, chdr[0]);
    assert_eq!((meta.packet_count, meta.stream_id, meta.pad_bytes), (3, 0x0102_0304, 0));
    assert_eq!(encapsulate_vrt(&chdr[0], 0x0102_0304, 3).unwrap(), frames[0]);

    let short = [0x00, 0x02, 0x00, 0x0b, 0x01, 0x02, 0x03, 0x04, 0x01, 0x02, 0x03];
    let (body, meta) = decapsulate_vrt(&frames[1]).unwrap();
    assert_eq!(body, short);
    assert_eq!((meta.packet_count, meta.pad_bytes), (15, 1));
    assert_eq!(encapsulate_vrt(&short, 0x0102_0304, 15).unwrap(), frames[1]);
}

fn packet() -> impl Strategy<Value = ChdrPacket> {
    (
        prop::sample::select(vec![
            PacketType::Data,
            PacketType::FlowControl,
            PacketType::Command,
            PacketType::Response,
        ]),
        any::<u32>(),
        0u16..4096,
        any::<bool>(),
        prop::option::of(any::<u64>()),
        prop::collection::vec(any::<u8>(), 0..512),
    )
        .prop_map(|(t, sid, seq, eob, ts, payload)| ChdrPacket::new(t, unpack_sid(sid), seq, eob, ts, payload))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sid_round_trip(v in any::<u32>()) {
        prop_assert_eq!(pack_sid(unpack_sid(v)), v);
    }

    #[test]
    fn chdr_and_vrt_round_trip(p in packet(), count in any::<u8>()) {
        let bytes = pack_chdr(&p).unwrap();
        prop_assert_eq!(bytes.len(), p.wire_len());
        prop_assert_eq!(&unpack_chdr(&bytes).unwrap(), &p);
        let frame = encapsulate_vrt(&bytes, pack_sid(p.header.sid), count).unwrap();
        prop_assert_eq!(frame.len() % 4, 0);
        let (body, meta) = decapsulate_vrt(&frame).unwrap();
        prop_assert_eq!(&body, &bytes);
        prop_assert_eq!(meta.packet_count, count % 16);
    }
}

proptest! {
    #[test]
    fn oversize_payload_rejected(extra in 1usize..64) {
        let p = ChdrPacket::data(StreamId::default(), 0, false, vec![0; DEFAULT_MTU + extra]);
        prop_assert!(pack_chdr(&p).is_err());
    }

    #[test]
    fn sequence_numbers_wrap_and_stay_monotone(start in 0u16..4096, n in 1usize..10_000) {
        let mut c = SequenceCounter::starting_at(start);
        let mut prev = c.next();
        prop_assert_eq!(prev, start);
        for _ in 1..n {
            let s = c.next();
            prop_assert!(s < 4096);
            prop_assert_eq!(s, (prev + 1) % 4096);
            prev = s;
        }
    }

    #[test]
    fn packetized_streams_step_by_one(len in 0usize..5000, start in 0u16..4096) {
        let mut seq = SequenceCounter::starting_at(start);
        let burst = vec![Sample::new(1.0, -1.0); len];
        let sid = StreamId::new(1, 1, 1, 2);
        let packets = packetize_burst(sid, &mut seq, &burst);
        for w in packets.windows(2) {
            prop_assert_eq!(sequence_delta(w[0].header.sequence, w[1].header.sequence), 1);
        }
        prop_assert!(packets.last().unwrap().header.end_of_burst);
    }
}
