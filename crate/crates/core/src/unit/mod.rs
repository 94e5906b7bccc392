//! Processing-unit substrate: samples, ready/valid links, register maps,
//! the kind catalog and unit instances.

mod catalog;
mod descriptor;
pub mod fifo;
mod instance;
mod registers;
mod runner;
mod sample;
mod wiring;

use thiserror::Error;

pub use catalog::{Behavior, BlockKind, Catalog, IoShape, KindEntry};
pub use descriptor::{RegisterSpec, UnitDescriptor};
pub use fifo::{Fifo, FifoError};
pub use instance::{ClockDomain, StepReport, UnitId, UnitInstance};
pub use registers::{RegisterFile, Registers};
pub use runner::{QuiesceTimeout, UnitRunner};
pub use sample::*;
pub use wiring::{min_link_capacity, LinkKind, PortRef, StreamLink, Wiring, DEFAULT_LINK_CAPACITY};

/// A stream link between two unit ports.
pub type Link = Fifo<Sample>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("kind {0} already registered")]
    DuplicateKind(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown kind {0}")]
    UnknownKind(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("parameter {name} = {value} out of range")]
    ParamOutOfRange { name: String, value: u32 },
    #[error("unknown register offset {0:#x}")]
    UnknownOffset(u32),
    #[error("value {value} out of range for register {offset:#x}")]
    ValueOutOfRange { offset: u32, value: u32 },
    #[error("{reason}: {register} = {value}")]
    UnsupportedValue {
        register: String,
        value: u32,
        reason: String,
    },
    #[error("input port already linked")]
    PortOccupied,
    #[error("no such port")]
    NoSuchPort,
    #[error("link capacity must be at least 1")]
    ZeroCapacity,
    #[error("burst of {len} items is not a multiple of the {window}-item window")]
    BurstMisaligned { len: usize, window: usize },
}

impl UnitError {
    /// Short machine-readable name, used in protocol error responses.
    pub fn code(&self) -> &'static str {
        match self {
            UnitError::DuplicateKind(_) => "DuplicateKind",
            UnitError::InvalidDescriptor(_) => "InvalidDescriptor",
            UnitError::UnknownKind(_) => "UnknownKind",
            UnitError::UnknownParam(_) => "UnknownParam",
            UnitError::ParamOutOfRange { .. } => "ParamOutOfRange",
            UnitError::UnknownOffset(_) => "UnknownOffset",
            UnitError::ValueOutOfRange { .. } => "ValueOutOfRange",
            UnitError::UnsupportedValue { .. } => "UnsupportedValue",
            UnitError::PortOccupied => "PortOccupied",
            UnitError::NoSuchPort => "NoSuchPort",
            UnitError::ZeroCapacity => "ZeroCapacity",
            UnitError::BurstMisaligned { .. } => "BurstMisaligned",
        }
    }
}
