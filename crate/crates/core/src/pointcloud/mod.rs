//! Point-cloud data model, rotation and augmentation transforms, and dataset
//! ingestion.

mod augment;
mod dataset;
mod idx;
mod raster;
mod synth;

use std::path::PathBuf;

use ndarray::{s, Array1, Array2, Axis};
use thiserror::Error;

use crate::rotgroup::{GroupError, RotationMatrix};

pub use augment::{jitter_scale, random_rotation, RotationMode};
pub use dataset::{
    read_dataset, read_dataset_bytes, write_dataset, write_dataset_bytes, ChannelLayout,
    DatasetHeader, DatasetManifest, SplitEntry, Splits, DATASET_MAGIC, DATASET_VERSION,
    MANIFEST_FORMAT,
};
pub use idx::{IMAGES_MAGIC, LABELS_MAGIC, load_idx_digits, read_idx, read_idx_bytes, IdxArray};
pub use raster::image_to_pointcloud;
pub use synth::{synth_shapes, ShapeKind, ShapeSet};

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid point cloud: {0}")]
    Invalid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("image has no non-zero pixels")]
    EmptyImage,
    #[error("unknown shape class `{0}`")]
    UnknownShape(String),
    #[error("{path}: bad magic number {found:#010x}")]
    BadMagic { path: String, found: u32 },
    #[error("{path}: truncated at byte offset {offset} (needed {needed} more bytes)")]
    Truncated {
        path: String,
        offset: usize,
        needed: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl PointCloudError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// An unordered set of points with optional per-point normals and intensity.
///
/// Rows of every per-point array are aligned: row `i` of `coords`, `normals`
/// and `intensity` describe the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub coords: Array2<f64>,
    pub normals: Option<Array2<f64>>,
    pub intensity: Option<Array1<f64>>,
    pub label: usize,
}

impl PointCloud {
    pub fn new(coords: Array2<f64>, label: usize) -> Result<Self, PointCloudError> {
        let pc = Self {
            coords,
            normals: None,
            intensity: None,
            label,
        };
        pc.validate()?;
        Ok(pc)
    }

    pub fn with_normals(mut self, normals: Array2<f64>) -> Result<Self, PointCloudError> {
        self.normals = Some(normals);
        self.validate()?;
        Ok(self)
    }

    pub fn with_intensity(mut self, intensity: Array1<f64>) -> Result<Self, PointCloudError> {
        self.intensity = Some(intensity);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn layout(&self) -> ChannelLayout {
        ChannelLayout {
            spatial_dim: self.dim(),
            normals: self.normals.is_some(),
            intensity: self.intensity.is_some(),
        }
    }

    pub fn validate(&self) -> Result<(), PointCloudError> {
        let n = self.len();
        if n == 0 {
            return Err(PointCloudError::Invalid("cloud has no points".into()));
        }
        if !(self.dim() == 2 || self.dim() == 3) {
            return Err(PointCloudError::Invalid(format!(
                "spatial dimension {} is not 2 or 3",
                self.dim()
            )));
        }
        if let Some(normals) = &self.normals {
            if normals.dim() != (n, self.dim()) {
                return Err(PointCloudError::Invalid(format!(
                    "normals shape {:?} does not match coords {:?}",
                    normals.dim(),
                    self.coords.dim()
                )));
            }
            for row in normals.rows() {
                let len = row.dot(&row).sqrt();
                if (len - 1.0).abs() > 1e-6 {
                    return Err(PointCloudError::Invalid(format!(
                        "normal with length {len} is not unit"
                    )));
                }
            }
        }
        if let Some(intensity) = &self.intensity {
            if intensity.len() != n {
                return Err(PointCloudError::Invalid(format!(
                    "intensity length {} does not match {} points",
                    intensity.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    /// Network input: coordinates, then normals, then intensity, per row.
    pub fn features(&self, use_normals: bool) -> Array2<f64> {
        let mut blocks = vec![self.coords.view()];
        if use_normals {
            if let Some(n) = &self.normals {
                blocks.push(n.view());
            }
        }
        let intensity = self.intensity.as_ref().map(|i| i.view().insert_axis(Axis(1)));
        if let Some(i) = &intensity {
            blocks.push(i.view());
        }
        ndarray::concatenate(Axis(1), &blocks).expect("row counts agree")
    }

    /// Reorders rows: output row `i` is input row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        Self {
            coords: self.coords.select(Axis(0), order),
            normals: self.normals.as_ref().map(|n| n.select(Axis(0), order)),
            intensity: self.intensity.as_ref().map(|i| i.select(Axis(0), order)),
            label: self.label,
        }
    }

    /// Rounds every channel to 32-bit precision, the storage precision of the
    /// native dataset format.
    pub fn quantized(&self) -> Self {
        let q = |v: &f64| *v as f32 as f64;
        Self {
            coords: self.coords.map(q),
            normals: self.normals.as_ref().map(|n| n.map(q)),
            intensity: self.intensity.as_ref().map(|i| i.map(q)),
            label: self.label,
        }
    }
}

/// `coords' = coords · rᵀ`; normals rotate with the coordinates, intensity and
/// label are untouched, row order is preserved.
pub fn apply_rotation(pc: &PointCloud, r: &RotationMatrix) -> Result<PointCloud, PointCloudError> {
    if r.dim() != pc.dim() {
        return Err(PointCloudError::DimensionMismatch {
            expected: pc.dim(),
            actual: r.dim(),
        });
    }
    let rt = rotation_transpose(r);
    Ok(PointCloud {
        coords: pc.coords.dot(&rt),
        normals: pc.normals.as_ref().map(|n| n.dot(&rt)),
        intensity: pc.intensity.clone(),
        label: pc.label,
    })
}

/// `rᵀ` as a `dim×dim` array.
pub fn rotation_transpose(r: &RotationMatrix) -> Array2<f64> {
    let d = r.dim();
    Array2::from_shape_fn((d, d), |(i, j)| r.get(j, i))
}

/// Rotates the leading `r.dim()` columns of a feature matrix in place of a
/// full cloud. Used on network inputs whose trailing columns are normals
/// and/or rotation-invariant channels.
pub fn rotate_features(
    features: &Array2<f64>,
    r: &RotationMatrix,
    normals: bool,
) -> Array2<f64> {
    let d = r.dim();
    let rt = rotation_transpose(r);
    let mut out = features.clone();
    out.slice_mut(s![.., 0..d])
        .assign(&features.slice(s![.., 0..d]).dot(&rt));
    if normals {
        out.slice_mut(s![.., d..2 * d])
            .assign(&features.slice(s![.., d..2 * d]).dot(&rt));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotgroup::{build_cube24, build_cyclic_z, build_klein4, build_tetra12};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
        let coords = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        PointCloud::new(coords, 0).unwrap()
    }

    #[test]
    fn identity_rotation_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pc = random_cloud(&mut rng, 10, 3);
        let out = apply_rotation(&pc, &RotationMatrix::identity(3).unwrap()).unwrap();
        assert_eq!(out, pc);
    }

    #[test]
    fn quarter_turn_moves_x_to_y() {
        let pc = PointCloud::new(array![[1.0, 0.0, 0.0]], 3).unwrap();
        let r = RotationMatrix::about_z(FRAC_PI_2, 3).unwrap();
        let out = apply_rotation(&pc, &r).unwrap();
        let expected = array![[0.0, 1.0, 0.0]];
        assert!((&out.coords - &expected).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(out.label, 3);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let pc = PointCloud::new(array![[1.0, 0.0]], 0).unwrap();
        let r = RotationMatrix::identity(3).unwrap();
        assert!(matches!(
            apply_rotation(&pc, &r),
            Err(PointCloudError::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn rotation_composes_over_every_group_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let groups = [
            build_cyclic_z(12, 2).unwrap(),
            build_cyclic_z(9, 3).unwrap(),
            build_klein4(),
            build_tetra12(),
            build_cube24(),
        ];
        for g in &groups {
            let pc = random_cloud(&mut rng, 16, g.dim());
            for (i, ri) in g.elements().iter().enumerate() {
                for (j, rj) in g.elements().iter().enumerate() {
                    let lhs = apply_rotation(&apply_rotation(&pc, rj).unwrap(), ri).unwrap();
                    let rhs = apply_rotation(&pc, &g.elements()[g.cayley()[i][j]]).unwrap();
                    let err = (&lhs.coords - &rhs.coords).fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(err < 1e-9, "{} ({i},{j}): {err}", g.name());
                }
            }
        }
    }

    #[test]
    fn rotation_preserves_distances_and_rotates_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pc = random_cloud(&mut rng, 12, 3);
        let normals = pc.coords.map(|v| *v);
        let normals = &normals
            / &normals
                .map_axis(Axis(1), |r| r.dot(&r).sqrt())
                .insert_axis(Axis(1));
        let pc = pc.with_normals(normals).unwrap();
        let r = random_rotation(3, RotationMode::So3, &mut rng).unwrap();
        let out = apply_rotation(&pc, &r).unwrap();
        for a in 0..12 {
            for b in 0..12 {
                let d0 = &pc.coords.row(a) - &pc.coords.row(b);
                let d1 = &out.coords.row(a) - &out.coords.row(b);
                assert!((d0.dot(&d0).sqrt() - d1.dot(&d1).sqrt()).abs() < 1e-9);
            }
        }
        out.validate().unwrap();
        // normals here equal normalized positions, which the rotation preserves
        let n = out.normals.unwrap();
        let expect = &out.coords
            / &out
                .coords
                .map_axis(Axis(1), |r| r.dot(&r).sqrt())
                .insert_axis(Axis(1));
        assert!((&n - &expect).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rotate_features_leaves_intensity() {
        let f = array![[1.0, 0.0, 0.7], [0.0, 2.0, 0.2]];
        let r = RotationMatrix::about_z(FRAC_PI_2, 2).unwrap();
        let out = rotate_features(&f, &r, false);
        assert_eq!(out.column(2), f.column(2));
        assert!((out[[0, 1]] - 1.0).abs() < 1e-15);
        assert!((out[[1, 0]] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn validation_catches_bad_normals() {
        let pc = PointCloud::new(array![[1.0, 0.0, 0.0]], 0).unwrap();
        assert!(pc.clone().with_normals(array![[2.0, 0.0, 0.0]]).is_err());
        assert!(pc.with_intensity(array![0.1, 0.2]).is_err());
        assert!(PointCloud::new(Array2::zeros((0, 3)), 0).is_err());
    }
}
