use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{evaluate, Classifier, EvalOptions, PipelineError, TrainConfig};
use crate::nn::{adam_step, AdamConfig, AdamState, ParameterSet};
use crate::pointcloud::{apply_rotation, jitter_scale, random_rotation, ChannelLayout, DatasetManifest, PointCloud, RotationMode};

/// Training and validation clouds plus their shared description.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<PointCloud>,
    pub val: Vec<PointCloud>,
    pub layout: ChannelLayout,
    pub classes: usize,
}

pub fn load_train_data(manifest: &Path) -> Result<(DatasetManifest, TrainData), PipelineError> {
    let m = DatasetManifest::load(manifest)?;
    let data = TrainData {
        train: m.read_split("train")?,
        val: m.read_split("val")?,
        layout: m.channels,
        classes: m.class_count(),
    };
    Ok((m, data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub params: ParameterSet,
    pub adam: AdamState,
    pub epochs: Vec<EpochRecord>,
}

// Parameter init and the data stream use separate ChaCha streams of one seed.
const DATA_STREAM: u64 = 1;

/// Trains from scratch. `on_epoch` sees each record as soon as it exists.
///
/// Each epoch shuffles the training set; every sample is rotated per the
/// augmentation mode, jittered and scaled, then contributes its gradient.
/// Batch gradients are summed in sample order and averaged, so results do not
/// depend on the worker count.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, PipelineError> {
    cfg.validate_for_dim(data.layout.spatial_dim)?;
    if data.train.is_empty() {
        return Err(PipelineError::Config("training split is empty".into()));
    }
    if let Some(pc) = data.train.iter().chain(&data.val).find(|pc| pc.label >= data.classes) {
        return Err(PipelineError::Config(format!(
            "label {} out of range for {} classes",
            pc.label, data.classes
        )));
    }
    let model = Classifier::new(cfg, data.layout, data.classes)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.init_params(&mut init_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(DATA_STREAM);
    let adam_cfg = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let scale = (cfg.scale_range[0], cfg.scale_range[1]);
    let rotation = cfg.augmentation.rotation_mode();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(batch.len());
            for &i in batch {
                let mut pc = data.train[i].clone();
                if let Some(mode) = rotation {
                    let r = random_rotation(pc.dim(), mode, &mut rng)?;
                    pc = apply_rotation(&pc, &r)?;
                }
                pc = jitter_scale(&pc, cfg.jitter_sigma, scale, &mut rng)?;
                inputs.push((model.features(&pc)?, pc.label));
            }
            let per_sample: Vec<(f64, ParameterSet)> = inputs
                .par_iter()
                .map(|(f, label)| {
                    let mut g = params.zeros_like();
                    let loss = model.loss_and_grad(&params, f.view(), *label, &mut g)?;
                    Ok((loss, g))
                })
                .collect::<Result<_, PipelineError>>()?;
            let mut grads = params.zeros_like();
            for (loss, g) in &per_sample {
                loss_sum += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        }
        if !params.all_finite() {
            return Err(crate::nn::NnError::NonFinite(format!("parameters after epoch {epoch}")).into());
        }
        let val_accuracy = if data.val.is_empty() {
            None
        } else {
            let opts = EvalOptions {
                rotations: 1,
                mode: RotationMode::Z,
                seed: cfg.seed,
            };
            Some(evaluate(&model, &params, &data.val, &opts)?.instance_accuracy)
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / data.train.len() as f64,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        epochs.push(record);
    }
    Ok(TrainOutcome {
        classifier: model,
        params,
        adam,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::BackboneKind;
    use crate::pointcloud::synth_shapes;

    fn shapes(seed: u64, per_class: usize) -> TrainData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = ["sphere", "cube", "torus"].iter().map(|s| s.to_string()).collect();
        let set = synth_shapes(&names, 48, per_class, &mut rng).unwrap();
        let records = set.records;
        TrainData {
            layout: records[0].layout(),
            train: records,
            val: Vec::new(),
            classes: 3,
        }
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            backbone: BackboneKind::Pointnet,
            group: "c4".into(),
            epochs,
            batch_size: 8,
            learning_rate: 3e-3,
            width: 0.125,
            head_hidden: 16,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = shapes(1, 4);
        let out = train(&cfg(0), &data, &mut |_| {}).unwrap();
        let init = out.classifier.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(out.params, init);
        assert!(out.epochs.is_empty());
    }

    #[test]
    fn replay_is_bit_identical() {
        let data = shapes(2, 4);
        let a = train(&cfg(2), &data, &mut |_| {}).unwrap();
        let b = train(&cfg(2), &data, &mut |_| {}).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.adam, b.adam);
        assert_eq!(a.epochs[1].loss, b.epochs[1].loss);
    }

    #[test]
    fn loss_decreases_on_shapes() {
        let data = shapes(3, 12);
        let out = train(&cfg(5), &data, &mut |_| {}).unwrap();
        assert!(out.epochs[4].loss < out.epochs[0].loss, "{:?}", out.epochs);
    }

    #[test]
    fn rejects_bad_labels_and_so3_on_2d() {
        let mut data = shapes(4, 2);
        data.train[0].label = 9;
        assert!(train(&cfg(1), &data, &mut |_| {}).is_err());
        let flat = TrainData {
            layout: ChannelLayout {
                spatial_dim: 2,
                normals: false,
                intensity: false,
            },
            ..shapes(4, 2)
        };
        let so3 = TrainConfig {
            augmentation: super::super::Augmentation::So3,
            ..cfg(1)
        };
        assert!(matches!(train(&so3, &flat, &mut |_| {}), Err(PipelineError::Config(_))));
    }
}
