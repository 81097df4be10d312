//! Minimal dense-network substrate: a layer graph with exact reverse-mode
//! gradients, named parameters, Adam, softmax cross-entropy and a binary
//! checkpoint format.
//!
//! Activations are `rows × features` matrices. A point cloud enters as an
//! `N × d` matrix, shared-dense layers act on every row with the same
//! weights, and pooling layers reduce rows. Everything is `f64`.

mod checkpoint;
mod graph;
mod loss;
mod optim;
mod params;

use thiserror::Error;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_bytes, write_checkpoint, write_checkpoint_bytes,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use graph::{Layer, NetworkBuilder, NetworkSpec, Node, NodeId, Session, Source};
pub use loss::{cross_entropy, log_softmax, softmax};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ParamSpec, ParameterSet};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch at {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("backward called before forward")]
    MissingForwardCache,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn shape_err(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> NnError {
    NnError::Shape {
        context: context.into(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
