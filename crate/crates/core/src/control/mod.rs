//! Control plane: a newline-delimited JSON protocol over TCP, the node that
//! answers it, a client, and the `sdrctl` command line.

pub mod cli;
mod client;
mod node;
mod service;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chain::AdmissionReport;

pub use client::{ControlClient, RemoteHost};
pub use node::Node;
pub use service::ControlServer;

/// Every verb the service answers.
pub const VERBS: [&str; 14] = [
    "catalog",
    "deploy",
    "teardown",
    "list",
    "set-param",
    "get-param",
    "rf-set",
    "rf-get",
    "stats",
    "reconfig-full",
    "reconfig-prr",
    "fronthaul-rate",
    "subscribe",
    "host",
];

/// Longest request line the service reads.
pub const MAX_LINE_BYTES: usize = 4 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub id: u64,
    pub verb: String,
    #[serde(default)]
    pub args: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<AdmissionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResponse {
    /// Echo of the request id; absent when the request could not be read.
    pub id: Option<u64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl ControlResponse {
    pub fn ok(id: u64, payload: Value) -> Self {
        Self {
            id: Some(id),
            status: Status::Ok,
            payload: Some(payload),
            error: None,
        }
    }

    pub fn error(id: Option<u64>, body: ErrorBody) -> Self {
        Self {
            id,
            status: Status::Error,
            payload: None,
            error: Some(body),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("cannot reach {0}")]
    Connection(String),
    #[error("control endpoint busy: {0}")]
    EndpointBusy(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{code}: {detail}")]
    Rejected {
        code: String,
        detail: String,
        report: Option<Box<AdmissionReport>>,
    },
}

impl ControlError {
    pub fn code(&self) -> &str {
        match self {
            ControlError::Connection(_) => "Connection",
            ControlError::EndpointBusy(_) => "EndpointBusy",
            ControlError::Protocol(_) => "Protocol",
            ControlError::Rejected { code, .. } => code,
        }
    }
}

impl From<ErrorBody> for ControlError {
    fn from(b: ErrorBody) -> Self {
        ControlError::Rejected {
            code: b.code,
            detail: b.detail,
            report: b.report.map(Box::new),
        }
    }
}
