//! Full network: embedding, tokenisation, transformer, interpolation and
//! readout, with training, metrics and procedural datasets.

mod config;
mod metrics;
mod network;
mod toy;
mod train;

pub use config::{ModelConfig, Task, TaskPreset};
pub use metrics::{metric_eps, metric_mae};
pub use network::{embed_mesh, LabGatr, Prediction, PreparedSample};
pub use toy::{make_toy_dataset, ToyKind};
pub use train::{evaluate, train, EpochRecord, SampleScore, TrainOptions, TrainOutcome};

use crate::autodiff::AutodiffError;
use crate::mesh::MeshError;
use crate::pga::PgaError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("missing descriptor `{0}`")]
    MissingDescriptor(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Pga(#[from] PgaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
