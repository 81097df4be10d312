//! Training and evaluation of group-wrapped classifiers.

mod ablation;
mod config;
mod eval;
mod metrics;
mod model;
mod prepare;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::equivariance::EquivError;
use crate::nn::NnError;
use crate::pointcloud::PointCloudError;
use crate::rotgroup::GroupError;

pub use ablation::{ablation_csv, run_ablation, AblationRow};
pub use config::{Augmentation, TrainConfig};
pub use eval::{evaluate, evaluate_checkpoint, test_rotations, EvalOptions, EvalResult};
pub use metrics::{format_record, MetricsLog};
pub use model::{load_checkpoint, save_checkpoint, Classifier, ADAM_PREFIX};
pub use prepare::{prepare_idx, prepare_synth, split_counts, PrepareSummary, SplitSizes};
pub use train::{load_train_data, train, EpochRecord, TrainData, TrainOutcome};

/// File names used inside a training output directory.
pub const CHECKPOINT_FILE: &str = "checkpoint.rqck";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.log";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint does not fit this model: {0}")]
    Incompatible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    PointCloud(#[from] PointCloudError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Equiv(#[from] EquivError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl PipelineError {
    /// True for failures rooted in reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            PipelineError::Io { .. }
                | PipelineError::Parse { .. }
                | PipelineError::PointCloud(
                    PointCloudError::Io { .. }
                        | PointCloudError::BadMagic { .. }
                        | PointCloudError::Truncated { .. }
                        | PointCloudError::Format { .. }
                        | PointCloudError::CountMismatch { .. }
                )
                | PipelineError::Nn(NnError::Io { .. } | NnError::Checkpoint { .. })
        )
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}
