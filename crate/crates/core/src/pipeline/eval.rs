use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{load_checkpoint, Classifier, PipelineError, TrainConfig};
use crate::nn::ParameterSet;
use crate::pointcloud::{apply_rotation, random_rotation, DatasetManifest, PointCloud, RotationMode};
use crate::rotgroup::RotationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub rotations: usize,
    pub mode: RotationMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub instance_accuracy: f64,
    /// Unweighted mean of per-class recall over classes present in the set.
    pub class_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub rotations: usize,
    pub predictions: Vec<usize>,
}

impl EvalResult {
    pub fn from_predictions(labels: &[usize], predictions: Vec<usize>, classes: usize, rotations: usize) -> Self {
        let mut confusion = vec![vec![0; classes]; classes];
        for (&t, &p) in labels.iter().zip(&predictions) {
            confusion[t][p] += 1;
        }
        let correct = labels.iter().zip(&predictions).filter(|(t, p)| t == p).count();
        let recalls: Vec<f64> = confusion
            .iter()
            .enumerate()
            .filter_map(|(c, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Self {
            instance_accuracy: correct as f64 / labels.len().max(1) as f64,
            class_accuracy: recalls.iter().sum::<f64>() / recalls.len().max(1) as f64,
            confusion,
            rotations,
            predictions,
        }
    }
}

/// Test-time rotations for sample `index`.
///
/// `z`: angles `2πj/n`, the same for every sample (`j = 0` is the identity).
/// `so3`: `n` uniform random rotations from a stream keyed by the seed and the
/// sample index, so results do not depend on evaluation order.
pub fn test_rotations(dim: usize, opts: &EvalOptions, index: usize) -> Result<Vec<RotationMatrix>, PipelineError> {
    if opts.rotations == 0 {
        return Err(PipelineError::Config("at least one test rotation is required".into()));
    }
    match opts.mode {
        RotationMode::Z => (0..opts.rotations)
            .map(|j| Ok(RotationMatrix::about_z(2.0 * PI * j as f64 / opts.rotations as f64, dim)?))
            .collect(),
        RotationMode::So3 => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(index as u64 + 1);
            (0..opts.rotations)
                .map(|_| Ok(random_rotation(dim, RotationMode::So3, &mut rng)?))
                .collect()
        }
    }
}

fn argmax(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities averaged over the test rotations of each sample.
pub fn evaluate(
    model: &Classifier,
    params: &ParameterSet,
    test: &[PointCloud],
    opts: &EvalOptions,
) -> Result<EvalResult, PipelineError> {
    if test.is_empty() {
        return Err(PipelineError::Config("evaluation set is empty".into()));
    }
    if let Some(pc) = test.iter().find(|pc| pc.label >= model.classes()) {
        return Err(PipelineError::Incompatible(format!(
            "label {} but the model has {} classes",
            pc.label,
            model.classes()
        )));
    }
    let dim = model.data_layout().spatial_dim;
    let predictions = test
        .par_iter()
        .enumerate()
        .map(|(i, pc)| {
            let mut avg = Array1::<f64>::zeros(model.classes());
            let rots = test_rotations(dim, opts, i)?;
            for r in &rots {
                avg += &model.probabilities(params, &apply_rotation(pc, r)?)?;
            }
            avg /= rots.len() as f64;
            Ok(argmax(&avg))
        })
        .collect::<Result<Vec<usize>, PipelineError>>()?;
    let labels: Vec<usize> = test.iter().map(|pc| pc.label).collect();
    Ok(EvalResult::from_predictions(&labels, predictions, model.classes(), opts.rotations))
}

/// Loads a checkpoint with its config and evaluates it on a manifest split.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    config: &TrainConfig,
    manifest: &Path,
    split: &str,
    opts: &EvalOptions,
) -> Result<EvalResult, PipelineError> {
    let m = DatasetManifest::load(manifest)?;
    let model = Classifier::new(config, m.channels, m.class_count())?;
    let (params, _) = load_checkpoint(checkpoint, &model)?;
    let test = m.read_split(split)?;
    evaluate(&model, &params, &test, opts)
}
