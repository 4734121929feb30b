//! Federated averaging machinery: models, local SGD, loss-only passes,
//! aggregation, non-i.i.d. partitioning and dataset ingestion.

mod aggregate;
mod dataset;
mod model;
mod partition;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{fedavg, global_loss};
pub use dataset::{
    read_idx_images, read_idx_labels, synthetic_blobs, write_idx_images, write_idx_labels,
    Dataset, IdxImages, LocalDataset, SyntheticSource, DEFAULT_SEPARATION,
};
pub use model::{ModelSpec, Network};
pub use partition::{partition_noniid, PartitionManifest, QuantityProfile};
pub use train::{accuracy, local_train, loss_and_gradient, loss_pass, TrainReport};

#[derive(Debug, Error)]
pub enum FlError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no client contributions to aggregate")]
    NoClients,
    #[error("class {class} exhausted: vehicle {vehicle} needs {needed} more samples, {available} left")]
    Capacity {
        class: usize,
        vehicle: usize,
        needed: usize,
        available: usize,
    },
    #[error("{path}: format error at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

pub type Result<T> = std::result::Result<T, FlError>;

/// All trainable parameters of a model, flattened in canonical layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Local SGD settings. A zero learning rate freezes the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 20,
            epochs: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(FlError::InvalidArgument(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(FlError::InvalidArgument(
                "batch size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}
