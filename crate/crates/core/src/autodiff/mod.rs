//! Reverse-mode differentiation over flat `f64` arrays.

mod checkpoint;
mod geometric;
mod gradcheck;
mod ops;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use geometric::{attention_weights, ALPHA_TERMS, BETA_TERMS};
pub use gradcheck::{grad_check, grad_check_params, grad_check_params_worst, relative_error, WorstComponent};
pub use ops::{gelu, gelu_grad};
pub use params::{AdamConfig, ParamArray, ParameterStore};
pub use tape::{Function, Gradients, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("cluster {0} has no members")]
    EmptyGroup(usize),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("grade {0} is outside 0..=4")]
    Grade(usize),
    #[error("{channels} channels cannot be split into {heads} heads")]
    Heads { channels: usize, heads: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
