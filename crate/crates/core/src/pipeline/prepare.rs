use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{io_err, PipelineError};
use crate::pointcloud::{
    apply_rotation, image_to_pointcloud, load_idx_digits, random_rotation, synth_shapes, write_dataset,
    DatasetManifest, PointCloud, RotationMode, SplitEntry, Splits,
};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub manifest_path: PathBuf,
    pub manifest: DatasetManifest,
}

/// Fits requested split sizes into `available` records. When there are too
/// few, validation and test shrink proportionally (at least one each when
/// possible) and training takes the rest.
pub fn split_counts(available: usize, requested: SplitSizes) -> SplitSizes {
    if requested.total() <= available {
        return requested;
    }
    let total = requested.total().max(1);
    let share = |n: usize| (available * n / total).max(usize::from(n > 0 && available >= 3));
    let val = share(requested.val);
    let test = share(requested.test);
    SplitSizes {
        train: available.saturating_sub(val + test),
        val,
        test,
    }
}

fn write_splits(
    out: &Path,
    name: &str,
    class_names: Vec<String>,
    points: usize,
    parts: [Vec<PointCloud>; 3],
) -> Result<PrepareSummary, PipelineError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let layout = parts
        .iter()
        .flat_map(|p| p.first())
        .next()
        .map(PointCloud::layout)
        .ok_or_else(|| PipelineError::Config("no records to write".into()))?;
    let classes = class_names.len();
    let mut entries = Vec::with_capacity(3);
    for (split, records) in ["train", "val", "test"].iter().zip(&parts) {
        if records.is_empty() {
            return Err(PipelineError::Config(format!("split `{split}` would be empty")));
        }
        let file = PathBuf::from(format!("{split}.rqpc"));
        write_dataset(&out.join(&file), records, classes)?;
        entries.push(SplitEntry {
            path: file,
            size: records.len(),
        });
    }
    let mut it = entries.into_iter();
    let splits = Splits {
        train: it.next().expect("3 splits"),
        val: it.next().expect("3 splits"),
        test: it.next().expect("3 splits"),
    };
    let manifest = DatasetManifest::new(name, class_names, points, layout, splits);
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(PrepareSummary {
        manifest: DatasetManifest::load(&manifest_path)?,
        manifest_path,
    })
}

fn maybe_rotate(pc: PointCloud, rotate: Option<RotationMode>, rng: &mut ChaCha8Rng) -> Result<PointCloud, PipelineError> {
    match rotate {
        None => Ok(pc),
        Some(mode) => {
            let r = random_rotation(pc.dim(), mode, rng)?;
            Ok(apply_rotation(&pc, &r)?)
        }
    }
}

/// Converts IDX digit images into 2D clouds (`x, y, intensity`).
///
/// Images are shuffled with `seed` and split in that order. With `rotate`,
/// every cloud gets its own random rotation.
pub fn prepare_idx(
    images: &Path,
    labels: &Path,
    out: &Path,
    points: usize,
    sizes: SplitSizes,
    rotate: Option<RotationMode>,
    seed: u64,
) -> Result<PrepareSummary, PipelineError> {
    let digits = load_idx_digits(images, labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..digits.len()).collect();
    order.shuffle(&mut rng);
    let counts = split_counts(digits.len(), sizes);
    let classes = digits.iter().map(|(_, l)| l + 1).max().unwrap_or(0).max(10);
    let mut parts: [Vec<PointCloud>; 3] = Default::default();
    let mut cursor = order.into_iter();
    for (part, n) in parts.iter_mut().zip([counts.train, counts.val, counts.test]) {
        for i in cursor.by_ref().take(n) {
            let (img, label) = &digits[i];
            let pc = image_to_pointcloud(img, points, *label, &mut rng)?;
            part.push(maybe_rotate(pc, rotate, &mut rng)?);
        }
    }
    let names = (0..classes).map(|c| c.to_string()).collect();
    write_splits(out, "digits", names, points, parts)
}

/// Samples synthetic 3D shapes with normals; `per_class` sizes apply to
/// every shape class.
pub fn prepare_synth(
    out: &Path,
    shapes: &[String],
    points: usize,
    per_class: SplitSizes,
    rotate: Option<RotationMode>,
    seed: u64,
) -> Result<PrepareSummary, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<PointCloud>; 3] = Default::default();
    let mut class_names = Vec::new();
    for (part, n) in parts.iter_mut().zip([per_class.train, per_class.val, per_class.test]) {
        if n == 0 {
            return Err(PipelineError::Config("every split needs at least one cloud per class".into()));
        }
        let set = synth_shapes(shapes, points, n, &mut rng)?;
        class_names = set.class_names;
        for pc in set.records {
            part.push(maybe_rotate(pc, rotate, &mut rng)?);
        }
    }
    write_splits(out, "shapes", class_names, points, parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_fit_available() {
        let req = SplitSizes {
            train: 2000,
            val: 500,
            test: 1000,
        };
        assert_eq!(split_counts(5000, req), req);
        let small = split_counts(100, req);
        assert_eq!(small.total(), 100);
        assert_eq!((small.val, small.test), (14, 28));
    }

    #[test]
    fn synth_is_seed_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let shapes = vec!["sphere".to_string(), "cube".to_string()];
        let sizes = SplitSizes {
            train: 3,
            val: 1,
            test: 2,
        };
        let a = prepare_synth(&dir.path().join("a"), &shapes, 32, sizes, Some(RotationMode::So3), 7).unwrap();
        let b = prepare_synth(&dir.path().join("b"), &shapes, 32, sizes, Some(RotationMode::So3), 7).unwrap();
        for split in ["train", "val", "test"] {
            let fa = fs::read(a.manifest.split_path(split).unwrap()).unwrap();
            let fb = fs::read(b.manifest.split_path(split).unwrap()).unwrap();
            assert_eq!(fa, fb);
        }
        assert_eq!(a.manifest.splits.train.size, 6);
        assert_eq!(a.manifest.read_split("test").unwrap().len(), 4);
    }
}
