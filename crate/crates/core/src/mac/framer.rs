//! Packet bytes to fixed-size bit blocks and back.
//!
//! A frame is a 16-bit big-endian length, the payload bits MSB first, then
//! zero padding up to a whole number of blocks.

use crate::unit::{bits_to_bytes, bytes_to_bits};

pub const LENGTH_BITS: usize = 16;
pub const MAX_PACKET_BYTES: usize = u16::MAX as usize;

/// Blocks a packet of `len` bytes occupies.
pub fn blocks_for(len: usize, block_bits: usize) -> usize {
    (LENGTH_BITS + 8 * len).div_ceil(block_bits)
}

pub fn frame_packet(payload: &[u8], block_bits: usize) -> Vec<u8> {
    assert!(payload.len() <= MAX_PACKET_BYTES);
    let mut bits = bytes_to_bits(&(payload.len() as u16).to_be_bytes());
    bits.extend(bytes_to_bits(payload));
    bits.resize(blocks_for(payload.len(), block_bits) * block_bits, 0);
    bits
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Deframed {
    Packet(Vec<u8>),
    /// A block's check flag was clear; the packet is dropped.
    Corrupt { blocks: usize },
}

/// Reassembles packets from a block stream. In checked mode every block is
/// followed by one flag bit, 1 when the block passed its check.
#[derive(Debug, Clone)]
pub struct Deframer {
    block_bits: usize,
    checked: bool,
    blocks: Vec<u8>,
    needed: usize,
    bad: bool,
}

impl Deframer {
    pub fn new(block_bits: usize, checked: bool) -> Self {
        assert!(block_bits > LENGTH_BITS);
        Self {
            block_bits,
            checked,
            blocks: Vec::new(),
            needed: 0,
            bad: false,
        }
    }

    /// Items per input block, flag included.
    pub fn stride(&self) -> usize {
        self.block_bits + usize::from(self.checked)
    }

    /// Feeds one block of `stride()` bits.
    pub fn push_block(&mut self, block: &[u8]) -> Option<Deframed> {
        debug_assert_eq!(block.len(), self.stride());
        let (data, flag) = block.split_at(self.block_bits);
        if self.checked && flag[0] & 1 == 0 {
            self.bad = true;
        }
        if self.blocks.is_empty() {
            let len_bytes = bits_to_bytes(&data[..LENGTH_BITS]);
            let len = u16::from_be_bytes([len_bytes[0], len_bytes[1]]) as usize;
            self.needed = blocks_for(len, self.block_bits);
        }
        self.blocks.extend_from_slice(data);
        if self.blocks.len() < self.needed * self.block_bits {
            return None;
        }
        let bits = std::mem::take(&mut self.blocks);
        let blocks = self.needed;
        if std::mem::take(&mut self.bad) {
            return Some(Deframed::Corrupt { blocks });
        }
        let len_bytes = bits_to_bytes(&bits[..LENGTH_BITS]);
        let len = u16::from_be_bytes([len_bytes[0], len_bytes[1]]) as usize;
        Some(Deframed::Packet(bits_to_bytes(&bits[LENGTH_BITS..LENGTH_BITS + 8 * len])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_sizes() {
        for len in [0usize, 1, 2, 185, 186, 187, 500, 4096] {
            let p: Vec<u8> = (0..len).map(|i| (i * 7 + 3) as u8).collect();
            let bits = frame_packet(&p, 1496);
            assert_eq!(bits.len() % 1496, 0);
            let mut d = Deframer::new(1496, false);
            let mut out = None;
            for b in bits.chunks(1496) {
                assert!(out.is_none());
                out = d.push_block(b);
            }
            assert_eq!(out, Some(Deframed::Packet(p)));
        }
    }

    #[test]
    fn checked_mode_flags() {
        let p = vec![0xAB; 300];
        let bits = frame_packet(&p, 1496);
        let mut d = Deframer::new(1496, true);
        let blocks: Vec<Vec<u8>> = bits
            .chunks(1496)
            .enumerate()
            .map(|(i, b)| {
                let mut v = b.to_vec();
                v.push(u8::from(i != 1));
                v
            })
            .collect();
        assert_eq!(d.push_block(&blocks[0]), None);
        assert_eq!(d.push_block(&blocks[1]), Some(Deframed::Corrupt { blocks: 2 }));
        let mut good = blocks.clone();
        good[1][1496] = 1;
        assert_eq!(d.push_block(&good[0]), None);
        assert_eq!(d.push_block(&good[1]), Some(Deframed::Packet(p)));
    }
}
