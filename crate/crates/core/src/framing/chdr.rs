//! Compressed-header (CHDR) packets.
//!
//! Header word layout (64 bits, big-endian on the wire):
//!
//! | bits   | field          |
//! |--------|----------------|
//! | 63..62 | packet type    |
//! | 61     | has_time       |
//! | 60     | end_of_burst   |
//! | 59..48 | sequence       |
//! | 47..32 | length (bytes) |
//! | 31..0  | stream id      |
//!
//! `length` counts the whole packet: header word, optional timestamp word and
//! payload.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER_BYTES: usize = 8;
pub const TIMESTAMP_BYTES: usize = 8;
pub const DEFAULT_MTU: usize = 8000;
pub const SEQUENCE_MODULUS: u16 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChdrError {
    #[error("declared length {declared} does not match actual packet length {actual}")]
    InconsistentLength { declared: usize, actual: usize },
    #[error("payload of {len} bytes exceeds MTU of {mtu} bytes")]
    OversizeMtu { len: usize, mtu: usize },
    #[error("timestamp presence disagrees with has_time flag")]
    TimestampMismatch,
    #[error("buffer holds {available} bytes but packet needs {needed}")]
    Truncated { needed: usize, available: usize },
    #[error("length field {0} is below the minimum for this header")]
    BadLength(usize),
    #[error("sequence {0} out of range 0..4096")]
    BadSequence(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PacketType {
    Data,
    FlowControl,
    Command,
    Response,
}

impl PacketType {
    fn bits(self) -> u64 {
        match self {
            PacketType::Data => 0b00,
            PacketType::FlowControl => 0b01,
            PacketType::Command => 0b10,
            PacketType::Response => 0b11,
        }
    }

    fn from_bits(bits: u64) -> Self {
        match bits & 0b11 {
            0b00 => PacketType::Data,
            0b01 => PacketType::FlowControl,
            0b10 => PacketType::Command,
            _ => PacketType::Response,
        }
    }
}

/// Routing key: source and destination (device, endpoint) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamId {
    pub src_device: u8,
    pub src_endpoint: u8,
    pub dst_device: u8,
    pub dst_endpoint: u8,
}

impl StreamId {
    pub fn new(src_device: u8, src_endpoint: u8, dst_device: u8, dst_endpoint: u8) -> Self {
        Self {
            src_device,
            src_endpoint,
            dst_device,
            dst_endpoint,
        }
    }

    pub fn src(&self) -> EndpointAddr {
        EndpointAddr::new(self.src_device, self.src_endpoint)
    }

    pub fn dst(&self) -> EndpointAddr {
        EndpointAddr::new(self.dst_device, self.dst_endpoint)
    }

    pub fn between(src: EndpointAddr, dst: EndpointAddr) -> Self {
        Self::new(src.device, src.endpoint, dst.device, dst.endpoint)
    }

    /// Source and destination exchanged.
    pub fn swapped(&self) -> Self {
        Self::between(self.dst(), self.src())
    }
}

/// A (device, endpoint) address on the crossbar fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EndpointAddr {
    pub device: u8,
    pub endpoint: u8,
}

impl EndpointAddr {
    pub fn new(device: u8, endpoint: u8) -> Self {
        Self { device, endpoint }
    }
}

impl std::fmt::Display for EndpointAddr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.device, self.endpoint)
    }
}

pub fn pack_sid(sid: StreamId) -> u32 {
    (sid.src_device as u32) << 24
        | (sid.src_endpoint as u32) << 16
        | (sid.dst_device as u32) << 8
        | sid.dst_endpoint as u32
}

pub fn unpack_sid(value: u32) -> StreamId {
    StreamId {
        src_device: (value >> 24) as u8,
        src_endpoint: (value >> 16) as u8,
        dst_device: (value >> 8) as u8,
        dst_endpoint: value as u8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChdrHeader {
    pub packet_type: PacketType,
    pub has_time: bool,
    pub end_of_burst: bool,
    pub sequence: u16,
    pub length_bytes: u16,
    pub sid: StreamId,
}

impl ChdrHeader {
    pub fn overhead(&self) -> usize {
        if self.has_time {
            HEADER_BYTES + TIMESTAMP_BYTES
        } else {
            HEADER_BYTES
        }
    }

    pub fn to_word(&self) -> u64 {
        self.packet_type.bits() << 62
            | (self.has_time as u64) << 61
            | (self.end_of_burst as u64) << 60
            | ((self.sequence as u64) & 0xFFF) << 48
            | (self.length_bytes as u64) << 32
            | pack_sid(self.sid) as u64
    }

    pub fn from_word(word: u64) -> Self {
        Self {
            packet_type: PacketType::from_bits(word >> 62),
            has_time: (word >> 61) & 1 == 1,
            end_of_burst: (word >> 60) & 1 == 1,
            sequence: ((word >> 48) & 0xFFF) as u16,
            length_bytes: ((word >> 32) & 0xFFFF) as u16,
            sid: unpack_sid(word as u32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChdrPacket {
    pub header: ChdrHeader,
    pub timestamp: Option<u64>,
    pub payload: Vec<u8>,
}

impl ChdrPacket {
    /// Builds a packet whose header length and time flag agree with its contents.
    pub fn new(
        packet_type: PacketType,
        sid: StreamId,
        sequence: u16,
        end_of_burst: bool,
        timestamp: Option<u64>,
        payload: Vec<u8>,
    ) -> Self {
        let has_time = timestamp.is_some();
        let overhead = if has_time {
            HEADER_BYTES + TIMESTAMP_BYTES
        } else {
            HEADER_BYTES
        };
        let length_bytes = (overhead + payload.len()).min(u16::MAX as usize) as u16;
        Self {
            header: ChdrHeader {
                packet_type,
                has_time,
                end_of_burst,
                sequence: sequence % SEQUENCE_MODULUS,
                length_bytes,
                sid,
            },
            timestamp,
            payload,
        }
    }

    pub fn data(sid: StreamId, sequence: u16, end_of_burst: bool, payload: Vec<u8>) -> Self {
        Self::new(PacketType::Data, sid, sequence, end_of_burst, None, payload)
    }

    pub fn wire_len(&self) -> usize {
        self.header.overhead() + self.payload.len()
    }

    pub fn pack(&self) -> Result<Vec<u8>, ChdrError> {
        pack_chdr_with_mtu(self, DEFAULT_MTU)
    }
}

pub fn pack_chdr(packet: &ChdrPacket) -> Result<Vec<u8>, ChdrError> {
    pack_chdr_with_mtu(packet, DEFAULT_MTU)
}

pub fn pack_chdr_with_mtu(packet: &ChdrPacket, mtu: usize) -> Result<Vec<u8>, ChdrError> {
    let header = &packet.header;
    if packet.payload.len() > mtu {
        return Err(ChdrError::OversizeMtu {
            len: packet.payload.len(),
            mtu,
        });
    }
    if header.has_time != packet.timestamp.is_some() {
        return Err(ChdrError::TimestampMismatch);
    }
    if header.sequence >= SEQUENCE_MODULUS {
        return Err(ChdrError::BadSequence(header.sequence));
    }
    let actual = packet.wire_len();
    if header.length_bytes as usize != actual {
        return Err(ChdrError::InconsistentLength {
            declared: header.length_bytes as usize,
            actual,
        });
    }
    let mut out = Vec::with_capacity(actual);
    out.extend_from_slice(&header.to_word().to_be_bytes());
    if let Some(ts) = packet.timestamp {
        out.extend_from_slice(&ts.to_be_bytes());
    }
    out.extend_from_slice(&packet.payload);
    Ok(out)
}

/// Decodes the packet at the start of `bytes`; trailing bytes are ignored.
pub fn unpack_chdr(bytes: &[u8]) -> Result<ChdrPacket, ChdrError> {
    decode_chdr(bytes).map(|(packet, _)| packet)
}

/// Decodes the packet at the start of `bytes` and returns it with the number
/// of bytes it occupied.
pub fn decode_chdr(bytes: &[u8]) -> Result<(ChdrPacket, usize), ChdrError> {
    if bytes.len() < HEADER_BYTES {
        return Err(ChdrError::Truncated {
            needed: HEADER_BYTES,
            available: bytes.len(),
        });
    }
    let word = u64::from_be_bytes(bytes[..8].try_into().unwrap());
    let header = ChdrHeader::from_word(word);
    let len = header.length_bytes as usize;
    if len < header.overhead() {
        return Err(ChdrError::BadLength(len));
    }
    if bytes.len() < len {
        return Err(ChdrError::Truncated {
            needed: len,
            available: bytes.len(),
        });
    }
    let (timestamp, body_start) = if header.has_time {
        let ts = u64::from_be_bytes(bytes[8..16].try_into().unwrap());
        (Some(ts), 16)
    } else {
        (None, 8)
    };
    Ok((
        ChdrPacket {
            header,
            timestamp,
            payload: bytes[body_start..len].to_vec(),
        },
        len,
    ))
}

/// Per-flow sequence counter, wrapping modulo 4096.
#[derive(Debug, Default, Clone)]
pub struct SequenceCounter {
    next: u16,
}

impl SequenceCounter {
    pub fn starting_at(seq: u16) -> Self {
        Self {
            next: seq % SEQUENCE_MODULUS,
        }
    }

    pub fn next(&mut self) -> u16 {
        let seq = self.next;
        self.next = (self.next + 1) % SEQUENCE_MODULUS;
        seq
    }
}

/// Distance from `prev` to `next` in sequence space.
pub fn sequence_delta(prev: u16, next: u16) -> u16 {
    (next + SEQUENCE_MODULUS - prev % SEQUENCE_MODULUS) % SEQUENCE_MODULUS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_packet_layout() {
        let p = ChdrPacket::data(StreamId::default(), 0, false, vec![]);
        let bytes = pack_chdr(&p).unwrap();
        assert_eq!(bytes, [0x00, 0x00, 0x00, 0x08, 0x00, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn header_bits_land_where_expected() {
        let sid = StreamId::new(1, 2, 3, 4);
        let p = ChdrPacket::new(PacketType::Response, sid, 0xABC, true, Some(7), vec![9; 3]);
        let word = p.header.to_word();
        assert_eq!(word >> 62, 0b11);
        assert_eq!((word >> 61) & 1, 1);
        assert_eq!((word >> 60) & 1, 1);
        assert_eq!((word >> 48) & 0xFFF, 0xABC);
        assert_eq!((word >> 32) & 0xFFFF, 8 + 8 + 3);
        assert_eq!(word as u32, 0x0102_0304);
    }

    #[test]
    fn oversize_payload_rejected() {
        let p = ChdrPacket::data(StreamId::default(), 0, false, vec![0; DEFAULT_MTU + 1]);
        assert!(matches!(pack_chdr(&p), Err(ChdrError::OversizeMtu { .. })));
        let p = ChdrPacket::data(StreamId::default(), 0, false, vec![0; DEFAULT_MTU]);
        assert!(pack_chdr(&p).is_ok());
    }

    #[test]
    fn inconsistent_declared_length() {
        let mut p = ChdrPacket::data(StreamId::default(), 0, false, vec![1, 2, 3]);
        p.header.length_bytes = 12;
        assert_eq!(
            pack_chdr(&p),
            Err(ChdrError::InconsistentLength {
                declared: 12,
                actual: 11
            })
        );
        let mut p = ChdrPacket::data(StreamId::default(), 0, false, vec![]);
        p.timestamp = Some(1);
        assert_eq!(pack_chdr(&p), Err(ChdrError::TimestampMismatch));
    }

    #[test]
    fn truncated_buffer() {
        let mut bytes = [0u8; 8];
        bytes[3] = 24;
        assert_eq!(
            unpack_chdr(&bytes),
            Err(ChdrError::Truncated {
                needed: 24,
                available: 8
            })
        );
        assert!(matches!(
            unpack_chdr(&bytes[..5]),
            Err(ChdrError::Truncated { .. })
        ));
    }

    #[test]
    fn has_time_needs_sixteen_bytes() {
        let word: u64 = 1 << 61 | 8 << 32;
        assert_eq!(unpack_chdr(&word.to_be_bytes()), Err(ChdrError::BadLength(8)));
        let word: u64 = 4 << 32;
        assert_eq!(unpack_chdr(&word.to_be_bytes()), Err(ChdrError::BadLength(4)));
    }

    #[test]
    fn sid_layout() {
        assert_eq!(pack_sid(StreamId::new(1, 2, 3, 4)), 0x0102_0304);
        assert_eq!(pack_sid(StreamId::default()), 0);
        assert_eq!(unpack_sid(0xFF00_FF01), StreamId::new(0xFF, 0, 0xFF, 1));
    }

    #[test]
    fn decode_reports_consumed_length() {
        let p = ChdrPacket::data(StreamId::new(0, 1, 0, 2), 5, true, vec![1, 2, 3, 4]);
        let mut bytes = pack_chdr(&p).unwrap();
        bytes.extend_from_slice(&[0xEE; 5]);
        let (q, used) = decode_chdr(&bytes).unwrap();
        assert_eq!(q, p);
        assert_eq!(used, 12);
    }

    #[test]
    fn sequence_wraps() {
        let mut c = SequenceCounter::default();
        let seqs: Vec<u16> = (0..4100).map(|_| c.next()).collect();
        assert_eq!(seqs[4095], 4095);
        assert_eq!(seqs[4096], 0);
        for w in seqs.windows(2) {
            assert_eq!(sequence_delta(w[0], w[1]), 1);
        }
    }
}
