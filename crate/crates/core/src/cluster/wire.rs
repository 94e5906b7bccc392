//! Byte-stream framing for node links: a 4-byte big-endian length prefix
//! followed by one VRT frame, and the connection handshake.

use std::io::{Read, Write};

use crate::framing::{
    decapsulate_vrt, encapsulate_vrt, pack_chdr, pack_sid, unpack_chdr, ChdrPacket,
};

use super::ClusterError;

pub const MAGIC: &[u8; 8] = b"SDRCLUST";
pub const VERSION: u8 = 1;
pub const HELLO_BYTES: usize = 10;
pub const ACCEPT: u8 = 0;
pub const REJECT_DUPLICATE: u8 = 1;
/// Largest frame accepted from a peer.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

pub fn hello(device: u8) -> [u8; HELLO_BYTES] {
    let mut h = [0u8; HELLO_BYTES];
    h[..8].copy_from_slice(MAGIC);
    h[8] = VERSION;
    h[9] = device;
    h
}

/// Device id announced in a hello message.
pub fn parse_hello(h: &[u8; HELLO_BYTES]) -> Result<u8, ClusterError> {
    if &h[..8] != MAGIC {
        return Err(ClusterError::Handshake("bad magic".into()));
    }
    if h[8] != VERSION {
        return Err(ClusterError::Handshake(format!("unsupported version {}", h[8])));
    }
    Ok(h[9])
}

/// Length-prefixed VRT frame carrying `packet`.
pub fn encode_frame(packet: &ChdrPacket, count: u8) -> Result<Vec<u8>, ClusterError> {
    let chdr = pack_chdr(packet).map_err(|e| ClusterError::Framing(e.to_string()))?;
    let vrt = encapsulate_vrt(&chdr, pack_sid(packet.header.sid), count)
        .map_err(|e| ClusterError::Framing(e.to_string()))?;
    let mut out = Vec::with_capacity(4 + vrt.len());
    out.extend_from_slice(&(vrt.len() as u32).to_be_bytes());
    out.extend_from_slice(&vrt);
    Ok(out)
}

pub fn decode_frame(vrt: &[u8]) -> Result<ChdrPacket, ClusterError> {
    let (chdr, _) = decapsulate_vrt(vrt).map_err(|e| ClusterError::Framing(e.to_string()))?;
    unpack_chdr(&chdr).map_err(|e| ClusterError::Framing(e.to_string()))
}

/// Splits an arbitrarily chunked byte stream back into frames.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame body (without its prefix).
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, ClusterError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().expect("4 bytes")) as usize;
        if len > MAX_FRAME_BYTES {
            return Err(ClusterError::Framing(format!("frame of {len} bytes")));
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let frame = self.buf[4..4 + len].to_vec();
        self.buf.drain(..4 + len);
        Ok(Some(frame))
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Exchanges hellos and the accept byte. `reject` decides, from the peer's
/// device id, whether this side refuses the link.
pub fn handshake<S: Read + Write>(
    stream: &mut S,
    local: u8,
    reject: impl Fn(u8) -> bool,
) -> Result<u8, ClusterError> {
    let io = |e: std::io::Error| ClusterError::Handshake(e.to_string());
    stream.write_all(&hello(local)).map_err(io)?;
    let mut h = [0u8; HELLO_BYTES];
    stream.read_exact(&mut h).map_err(io)?;
    let peer = parse_hello(&h)?;
    let ours = if reject(peer) { REJECT_DUPLICATE } else { ACCEPT };
    stream.write_all(&[ours]).map_err(io)?;
    stream.flush().map_err(io)?;
    let mut theirs = [0u8; 1];
    stream.read_exact(&mut theirs).map_err(io)?;
    if ours != ACCEPT {
        return Err(ClusterError::DuplicateDevice(peer));
    }
    if theirs[0] != ACCEPT {
        return Err(ClusterError::DuplicateDevice(local));
    }
    Ok(peer)
}
