use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{io_err, PipelineError};
use crate::backbones::{BackboneConfig, BackboneKind};
use crate::equivariance::PoolMode;
use crate::pointcloud::RotationMode;

/// Per-sample rotation applied during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    None,
    Z,
    So3,
}

impl Augmentation {
    pub fn rotation_mode(self) -> Option<RotationMode> {
        match self {
            Augmentation::None => None,
            Augmentation::Z => Some(RotationMode::Z),
            Augmentation::So3 => Some(RotationMode::So3),
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Augmentation::None => "none",
            Augmentation::Z => "z",
            Augmentation::So3 => "so3",
        })
    }
}

impl FromStr for Augmentation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Augmentation::None),
            "z" => Ok(Augmentation::Z),
            "so3" => Ok(Augmentation::So3),
            other => Err(format!("unknown augmentation `{other}` (expected none, z or so3)")),
        }
    }
}

/// Everything needed to rebuild and train a model. Stored as TOML next to
/// every checkpoint so results are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub backbone: BackboneKind,
    pub group: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augmentation: Augmentation,
    pub jitter_sigma: f64,
    pub scale_range: [f64; 2],
    pub seed: u64,
    pub manifest: PathBuf,
    pub pool: PoolMode,
    /// Multiplier on every backbone width.
    pub width: f64,
    pub use_normals: bool,
    pub head_hidden: usize,
    pub centroids: usize,
    pub knn: usize,
    pub inject: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::PointnetFe,
            group: "c1".into(),
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            augmentation: Augmentation::None,
            jitter_sigma: 0.01,
            scale_range: [0.9, 1.1],
            seed: 0,
            manifest: PathBuf::new(),
            pool: PoolMode::Max,
            width: 1.0,
            use_normals: false,
            head_hidden: 128,
            centroids: 32,
            knn: 16,
            inject: false,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml(&text).map_err(|message| PipelineError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(path, self.to_toml()).map_err(|e| io_err(path, e))
    }

    pub fn backbone_config(&self) -> BackboneConfig {
        BackboneConfig {
            kind: self.backbone,
            width: self.width,
            centroids: self.centroids,
            knn: self.knn,
            inject: self.inject,
        }
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad(format!("width must be positive, got {}", self.width));
        }
        if self.head_hidden == 0 {
            return bad("head_hidden must be at least 1".into());
        }
        Ok(())
    }

    /// Checks against the spatial dimension of the data.
    pub fn validate_for_dim(&self, dim: usize) -> Result<(), PipelineError> {
        self.validate()?;
        if self.augmentation == Augmentation::So3 && dim != 3 {
            return Err(PipelineError::Config(format!(
                "augmentation so3 needs 3D data, the dataset is {dim}D"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_uses_verbatim_keys() {
        let cfg = TrainConfig {
            augmentation: Augmentation::So3,
            group: "tetra12".into(),
            ..TrainConfig::default()
        };
        let text = cfg.to_toml();
        for key in [
            "backbone = \"pointnet_fe\"",
            "group = \"tetra12\"",
            "epochs = 30",
            "batch_size = 32",
            "learning_rate = 0.001",
            "augmentation = \"so3\"",
            "jitter_sigma = 0.01",
            "scale_range = [0.9, 1.1]",
            "seed = 0",
            "pool = \"max\"",
        ] {
            assert!(text.contains(key), "missing `{key}` in\n{text}");
        }
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_takes_defaults_and_rejects_unknown_keys() {
        let cfg = TrainConfig::from_toml("epochs = 3\nbackbone = \"pointnet\"\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, 32);
        assert!(TrainConfig::from_toml("epoch = 3\n").is_err());
    }

    #[test]
    fn so3_needs_3d() {
        let cfg = TrainConfig {
            augmentation: Augmentation::So3,
            ..TrainConfig::default()
        };
        assert!(cfg.validate_for_dim(2).is_err());
        assert!(cfg.validate_for_dim(3).is_ok());
    }

    #[test]
    fn invalid_values() {
        for cfg in [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { scale_range: [1.2, 1.1], ..TrainConfig::default() },
            TrainConfig { width: -1.0, ..TrainConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
