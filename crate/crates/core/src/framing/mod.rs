//! Wire formats: CHDR packets, VRT envelopes and golden-vector files.

pub mod chdr;
pub mod vrt;

pub use chdr::{
    decode_chdr, pack_chdr, pack_chdr_with_mtu, pack_sid, unpack_chdr, unpack_sid, ChdrError,
    ChdrHeader, ChdrPacket, EndpointAddr, PacketType, SequenceCounter, StreamId, DEFAULT_MTU,
};
pub use vrt::{decapsulate_vrt, encapsulate_vrt, VrtError, VrtFrame};

/// Parses a golden-vector file: one hex-encoded frame per line. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_hex_lines(text: &str) -> Result<Vec<Vec<u8>>, String> {
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(n, line)| decode_hex(line).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

pub fn decode_hex(line: &str) -> Result<Vec<u8>, String> {
    let digits: Vec<u8> = line.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return Err("odd number of hex digits".into());
    }
    digits
        .chunks(2)
        .map(|pair| {
            let s = std::str::from_utf8(pair).map_err(|e| e.to_string())?;
            u8::from_str_radix(s, 16).map_err(|_| format!("bad hex digits {s:?}"))
        })
        .collect()
}

pub fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
