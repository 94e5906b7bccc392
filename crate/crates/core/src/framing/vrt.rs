//! Minimal VITA-49 IF-data envelope used to carry CHDR frames between nodes.
//!
//! Frame = header word, stream-id word, payload words, trailer word. Header:
//! packet type `0001` (IF data with stream id) in bits 31..28, C=0 (bit 27),
//! T=1 (bit 26), TSI=00 (23..22), TSF=00 (21..20), packet count (19..16) and
//! size in words (15..0). No class id, no timestamps. The trailer's low two
//! bits hold the number of zero pad bytes appended to the payload.

use thiserror::Error;

pub const IF_DATA_WITH_SID: u32 = 0b0001;
pub const MAX_FRAME_WORDS: usize = 0xFFFF;
const TRAILER_BIT: u32 = 1 << 26;
const CLASS_ID_BIT: u32 = 1 << 27;
const OVERHEAD_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VrtError {
    #[error("frame of {0} words exceeds the 16-bit size field")]
    OversizeFrame(usize),
    #[error("frame is {0} bytes, not a whole number of words")]
    Unaligned(usize),
    #[error("size field says {declared} words but frame holds {actual}")]
    SizeMismatch { declared: usize, actual: usize },
    #[error("unsupported packet type {0:#x}")]
    UnsupportedType(u32),
    #[error("frame lacks the required trailer or carries a class id")]
    UnsupportedProfile,
    #[error("pad count {0} is invalid for this payload")]
    BadPad(u32),
    #[error("frame too short")]
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VrtFrame {
    pub packet_count: u8,
    pub stream_id: u32,
    pub payload_words: Vec<u32>,
    pub pad_bytes: u8,
}

impl VrtFrame {
    pub fn size_words(&self) -> usize {
        self.payload_words.len() + OVERHEAD_WORDS
    }

    pub fn header_word(&self) -> u32 {
        IF_DATA_WITH_SID << 28
            | TRAILER_BIT
            | ((self.packet_count & 0xF) as u32) << 16
            | self.size_words() as u32
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, VrtError> {
        let words = self.size_words();
        if words > MAX_FRAME_WORDS {
            return Err(VrtError::OversizeFrame(words));
        }
        let mut out = Vec::with_capacity(words * 4);
        out.extend_from_slice(&self.header_word().to_be_bytes());
        out.extend_from_slice(&self.stream_id.to_be_bytes());
        for w in &self.payload_words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out.extend_from_slice(&(self.pad_bytes as u32 & 0b11).to_be_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VrtError> {
        if !bytes.len().is_multiple_of(4) {
            return Err(VrtError::Unaligned(bytes.len()));
        }
        let actual = bytes.len() / 4;
        if actual < OVERHEAD_WORDS {
            return Err(VrtError::Truncated);
        }
        let word = |i: usize| u32::from_be_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
        let header = word(0);
        let kind = header >> 28;
        if kind != IF_DATA_WITH_SID {
            return Err(VrtError::UnsupportedType(kind));
        }
        if header & TRAILER_BIT == 0 || header & CLASS_ID_BIT != 0 {
            return Err(VrtError::UnsupportedProfile);
        }
        let declared = (header & 0xFFFF) as usize;
        if declared != actual {
            return Err(VrtError::SizeMismatch { declared, actual });
        }
        let trailer = word(actual - 1);
        let pad = trailer & 0b11;
        let payload_words: Vec<u32> = (2..actual - 1).map(word).collect();
        if pad > 0 && payload_words.is_empty() {
            return Err(VrtError::BadPad(pad));
        }
        Ok(Self {
            packet_count: ((header >> 16) & 0xF) as u8,
            stream_id: word(1),
            payload_words,
            pad_bytes: pad as u8,
        })
    }

    /// Payload bytes with the zero padding stripped.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self
            .payload_words
            .iter()
            .flat_map(|w| w.to_be_bytes())
            .collect();
        out.truncate(out.len() - self.pad_bytes as usize);
        out
    }
}

/// Wraps encoded CHDR bytes in a VRT IF-data frame.
pub fn encapsulate_vrt(chdr_bytes: &[u8], stream_id: u32, count: u8) -> Result<Vec<u8>, VrtError> {
    let pad = (4 - chdr_bytes.len() % 4) % 4;
    let words = (chdr_bytes.len() + pad) / 4 + OVERHEAD_WORDS;
    if words > MAX_FRAME_WORDS {
        return Err(VrtError::OversizeFrame(words));
    }
    let payload_words = chdr_bytes
        .chunks(4)
        .map(|c| {
            let mut w = [0u8; 4];
            w[..c.len()].copy_from_slice(c);
            u32::from_be_bytes(w)
        })
        .collect();
    VrtFrame {
        packet_count: count % 16,
        stream_id,
        payload_words,
        pad_bytes: pad as u8,
    }
    .to_bytes()
}

/// Inverse of [`encapsulate_vrt`]; returns the carried bytes and the frame metadata.
pub fn decapsulate_vrt(frame: &[u8]) -> Result<(Vec<u8>, VrtFrame), VrtError> {
    let parsed = VrtFrame::from_bytes(frame)?;
    Ok((parsed.payload_bytes(), parsed))
}
