//! Chain specs, admission against the platform model, deployment and
//! reconfiguration.

mod admission;
mod fronthaul;
mod manager;
mod platform;
mod runtime;
mod spec;

use thiserror::Error;

use crate::crossbar::CrossbarError;
use crate::unit::{QuiesceTimeout, UnitError};

pub use admission::{
    evaluate, validate, AdmissionReport, LatencyCheck, PrrCheck, RemoteCheck, ResourceCheck,
    ThroughputCheck,
};
pub use fronthaul::{format_rate, fronthaul_rate};
pub use manager::{
    ChainManager, ChainRecord, FullReconfigReport, HostGrant, HostRequest, ManagerStats, PeerHost,
    PrrReport, PrrRecord, UnitRecord,
};
pub use platform::{PlatformModel, PrrSpec, ResourceBudget};
pub use runtime::ChainIo;
pub use spec::{
    parse_chain_spec, resolve, ChainGraph, ChainSection, ChainSpec, GraphLink, GraphUnit, LinkSpec,
    PortName, UnitSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("unknown kind {0}")]
    UnknownKind(String),
    #[error("dangling port {0}")]
    DanglingPort(String),
    #[error("cycle through direct links: {0}")]
    DirectCycle(String),
    #[error("chain is not connected: {0}")]
    Disconnected(String),
    #[error("invalid sharing: {0}")]
    InvalidSharing(String),
    #[error("invalid clock: {0}")]
    InvalidClock(String),
    #[error("link {link} capacity {capacity} is below the {needed}-item step window")]
    CapacityTooSmall {
        link: String,
        capacity: usize,
        needed: usize,
    },
    #[error("{unit}: {source}")]
    Unit { unit: String, source: UnitError },
    #[error("admission failed")]
    AdmissionFailed(Box<AdmissionReport>),
    #[error("unknown chain {0}")]
    UnknownChain(String),
    #[error("unknown unit {0}")]
    UnknownUnit(String),
    #[error("unknown PRR {0}")]
    UnknownPrr(String),
    #[error("occupant needs {cells} cells / {dsp} DSP but PRR {prr} holds {size_cells} / {size_dsp}")]
    OccupantTooLarge {
        prr: String,
        cells: u64,
        dsp: u64,
        size_cells: u64,
        size_dsp: u64,
    },
    #[error("incompatible boundary: {0}")]
    IncompatibleBoundary(String),
    #[error("{0} must be positive")]
    NotPositive(String),
    #[error("remote node: {0}")]
    Remote(String),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error(transparent)]
    Quiesce(#[from] QuiesceTimeout),
}

impl ChainError {
    pub fn code(&self) -> &'static str {
        match self {
            ChainError::SyntaxError(_) => "SyntaxError",
            ChainError::UnknownKind(_) => "UnknownKind",
            ChainError::DanglingPort(_) => "DanglingPort",
            ChainError::DirectCycle(_) => "DirectCycle",
            ChainError::Disconnected(_) => "Disconnected",
            ChainError::InvalidSharing(_) => "InvalidSharing",
            ChainError::InvalidClock(_) => "InvalidClock",
            ChainError::CapacityTooSmall { .. } => "CapacityTooSmall",
            ChainError::Unit { source, .. } => source.code(),
            ChainError::AdmissionFailed(_) => "AdmissionFailed",
            ChainError::UnknownChain(_) => "UnknownChain",
            ChainError::UnknownUnit(_) => "UnknownUnit",
            ChainError::UnknownPrr(_) => "UnknownPrr",
            ChainError::OccupantTooLarge { .. } => "OccupantTooLarge",
            ChainError::IncompatibleBoundary(_) => "IncompatibleBoundary",
            ChainError::NotPositive(_) => "NotPositive",
            ChainError::Remote(_) => "Remote",
            ChainError::Crossbar(e) => e.code(),
            ChainError::Quiesce(_) => "QuiesceTimeout",
        }
    }
}
