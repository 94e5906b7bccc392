//! Packs a CHDR data packet, wraps it in a VRT envelope and reads both back.

use sdrplane::framing::{
    decapsulate_vrt, encapsulate_vrt, pack_chdr, pack_sid, unpack_chdr, ChdrPacket, EndpointAddr, SequenceCounter,
    StreamId,
};

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn main() {
    let sid = StreamId::between(EndpointAddr::new(1, 2), EndpointAddr::new(3, 4));
    let mut seq = SequenceCounter::starting_at(4094);
    for k in 0..3u8 {
        let p = ChdrPacket::data(sid, seq.next(), k == 2, vec![k; 6]);
        let bytes = pack_chdr(&p).unwrap();
        let frame = encapsulate_vrt(&bytes, pack_sid(sid), k).unwrap();
        let (inner, meta) = decapsulate_vrt(&frame).unwrap();
        let back = unpack_chdr(&inner).unwrap();
        assert_eq!(back, p);
        println!("chdr {}", hex(&bytes));
        println!(
            "  vrt {} (count {}, pad {}) seq {} eob {}",
            hex(&frame),
            meta.packet_count,
            meta.pad_bytes,
            back.header.sequence,
            back.header.end_of_burst
        );
    }
}
