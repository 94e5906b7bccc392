//! Table-driven 32-bit CRC with configurable polynomial, init, final xor and
//! bit reflection.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcConfig {
    /// Normal (MSB-first) polynomial representation, implicit x^32 term.
    pub poly: u32,
    pub init: u32,
    pub xorout: u32,
    /// Reflect input bytes and the final remainder.
    pub reflect: bool,
}

impl CrcConfig {
    pub const CRC32: CrcConfig = CrcConfig {
        poly: 0x04C1_1DB7,
        init: 0xFFFF_FFFF,
        xorout: 0xFFFF_FFFF,
        reflect: true,
    };

    pub const CRC32_MPEG2: CrcConfig = CrcConfig {
        poly: 0x04C1_1DB7,
        init: 0xFFFF_FFFF,
        xorout: 0,
        reflect: false,
    };
}

impl Default for CrcConfig {
    fn default() -> Self {
        Self::CRC32
    }
}

#[derive(Clone)]
pub struct Crc32 {
    config: CrcConfig,
    table: [u32; 256],
}

impl std::fmt::Debug for Crc32 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Crc32").field("config", &self.config).finish()
    }
}

impl Crc32 {
    pub fn new(config: CrcConfig) -> Self {
        let mut table = [0u32; 256];
        if config.reflect {
            let rpoly = config.poly.reverse_bits();
            for (b, slot) in table.iter_mut().enumerate() {
                let mut r = b as u32;
                for _ in 0..8 {
                    r = if r & 1 != 0 { (r >> 1) ^ rpoly } else { r >> 1 };
                }
                *slot = r;
            }
        } else {
            for (b, slot) in table.iter_mut().enumerate() {
                let mut r = (b as u32) << 24;
                for _ in 0..8 {
                    r = if r & 0x8000_0000 != 0 {
                        (r << 1) ^ config.poly
                    } else {
                        r << 1
                    };
                }
                *slot = r;
            }
        }
        Self { config, table }
    }

    pub fn config(&self) -> CrcConfig {
        self.config
    }

    pub fn checksum(&self, data: &[u8]) -> u32 {
        let mut crc = if self.config.reflect {
            self.config.init.reverse_bits()
        } else {
            self.config.init
        };
        if self.config.reflect {
            for &b in data {
                crc = (crc >> 8) ^ self.table[((crc ^ b as u32) & 0xFF) as usize];
            }
        } else {
            for &b in data {
                crc = (crc << 8) ^ self.table[(((crc >> 24) ^ b as u32) & 0xFF) as usize];
            }
        }
        crc ^ self.config.xorout
    }

    /// CRC bytes in transmission order: little-endian for reflected
    /// configurations, big-endian otherwise.
    pub fn crc_bytes(&self, data: &[u8]) -> [u8; 4] {
        let c = self.checksum(data);
        if self.config.reflect {
            c.to_le_bytes()
        } else {
            c.to_be_bytes()
        }
    }

    pub fn append(&self, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len() + 4);
        out.extend_from_slice(data);
        out.extend_from_slice(&self.crc_bytes(data));
        out
    }

    pub fn check(&self, frame: &[u8]) -> bool {
        if frame.len() < 4 {
            return false;
        }
        let (data, tail) = frame.split_at(frame.len() - 4);
        self.crc_bytes(data) == tail
    }
}

pub fn crc_compute(data: &[u8], config: CrcConfig) -> u32 {
    Crc32::new(config).checksum(data)
}

pub fn crc_append(data: &[u8], config: CrcConfig) -> Vec<u8> {
    Crc32::new(config).append(data)
}

pub fn crc_check(frame: &[u8], config: CrcConfig) -> bool {
    Crc32::new(config).check(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_values() {
        assert_eq!(crc_compute(b"123456789", CrcConfig::CRC32), 0xCBF4_3926);
        assert_eq!(crc_compute(b"", CrcConfig::CRC32), 0);
        assert_eq!(crc_compute(b"123456789", CrcConfig::CRC32_MPEG2), 0x0376_E6E7);
    }

    #[test]
    fn append_then_check() {
        for cfg in [CrcConfig::CRC32, CrcConfig::CRC32_MPEG2] {
            let f = crc_append(b"hello radio", cfg);
            assert!(crc_check(&f, cfg));
            let mut g = f.clone();
            g[3] ^= 0x10;
            assert!(!crc_check(&g, cfg));
        }
        assert!(!crc_check(&[1, 2], CrcConfig::CRC32));
    }
}
