//! Signal-processing primitives and the built-in unit kinds.

pub mod blocks;
pub mod conv;
pub mod crc;
pub mod fft;
pub mod fir;
pub mod qam;

pub use blocks::{default_catalog, fir_tap_register, register_defaults, PassThroughKind};
pub use conv::{conv_encode, viterbi_decode, CodeError, CodeRate};
pub use crc::{crc_append, crc_check, crc_compute, Crc32, CrcConfig};
pub use fft::{fft, ifft, FftError, FftPlan, SUPPORTED_LENGTHS};
pub use fir::{fir_filter, FirState};
pub use qam::{qam_demap, qam_map, Order, QamError};
