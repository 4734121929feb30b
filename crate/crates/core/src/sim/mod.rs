//! Round-by-round simulation tying mobility, networking, evaluation,
//! selection and FedAvg together, plus its configuration and outputs.

mod audit;
mod config;
mod driver;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use audit::{AuditEvent, AuditLog, Channel, Endpoint, MessageKind};
pub use config::{DatasetSource, Placement, SimConfig};
pub use driver::{load_data, run, run_with_data, RunOutput, SimData};
pub use report::{emit_csv, write_csv, write_summary, RoundLog, RunSummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Fl(#[from] crate::fl::FlError),
    #[error(transparent)]
    Fuzzy(#[from] crate::fuzzy::FuzzyError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

pub type Result<T> = std::result::Result<T, SimError>;
