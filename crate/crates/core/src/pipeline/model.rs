use std::path::Path;

use ndarray::{arr0, Array1, Array2, ArrayView2, Ix2};
use rand::Rng;

use super::{PipelineError, TrainConfig};
use crate::backbones::Backbone;
use crate::equivariance::{backbone_features, PoolMode, WrapTrace};
use crate::nn::{
    cross_entropy, read_checkpoint, softmax, write_checkpoint, AdamState, NetworkBuilder, NetworkSpec,
    ParamSpec, ParameterSet, Session, Source,
};
use crate::pointcloud::{ChannelLayout, PointCloud};
use crate::rotgroup::RotationGroup;

/// Reserved checkpoint name prefix for optimizer state.
pub const ADAM_PREFIX: &str = "__adam/";

/// Group-wrapped backbone, branch pooling and a two-layer head.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub group: RotationGroup,
    pub backbone: Backbone,
    pub pool: PoolMode,
    head: NetworkSpec,
    classes: usize,
    data_layout: ChannelLayout,
}

impl Classifier {
    /// `data_layout` is the layout stored in the dataset; normals are fed to
    /// the backbone only when both present and enabled in `cfg`.
    pub fn new(cfg: &TrainConfig, data_layout: ChannelLayout, classes: usize) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if classes < 2 {
            return Err(PipelineError::Config(format!("need at least 2 classes, got {classes}")));
        }
        let group = RotationGroup::by_name(&cfg.group, data_layout.spatial_dim)?;
        let fed = ChannelLayout {
            normals: data_layout.normals && cfg.use_normals,
            ..data_layout
        };
        let backbone = Backbone::new(cfg.backbone_config(), fed)?;
        let c = backbone.output_width();
        if c < classes {
            return Err(PipelineError::Config(format!(
                "backbone feature width {c} is below the class count {classes}"
            )));
        }
        let mut b = NetworkBuilder::new(c);
        let pooled = match cfg.pool {
            PoolMode::Max => b.max_pool(Source::Input),
            PoolMode::Avg => b.avg_pool(Source::Input),
        };
        let h = b.dense(pooled, "head.0", cfg.head_hidden);
        let h = b.relu(h);
        let out = b.dense(h, "head.1", classes);
        Ok(Self {
            group,
            backbone,
            pool: cfg.pool,
            head: b.finish(out)?,
            classes,
            data_layout,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data_layout(&self) -> ChannelLayout {
        self.data_layout
    }

    pub fn head(&self) -> &NetworkSpec {
        &self.head
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = self.backbone.param_specs();
        specs.extend(self.head.param_specs());
        specs
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterSet {
        ParameterSet::init(&self.param_specs(), rng)
    }

    /// Network input rows for a cloud.
    pub fn features(&self, pc: &PointCloud) -> Result<Array2<f64>, PipelineError> {
        if pc.layout() != self.data_layout {
            return Err(PipelineError::Incompatible(format!(
                "model expects {} data, cloud is {}",
                self.data_layout,
                pc.layout()
            )));
        }
        Ok(backbone_features(&self.backbone, pc)?)
    }

    pub fn logits(&self, params: &ParameterSet, features: ArrayView2<f64>) -> Result<Array1<f64>, PipelineError> {
        let trace = WrapTrace::forward(&self.group, &self.backbone, params, features, self.pool)?;
        let mut head = Session::new(&self.head);
        Ok(head.forward(params, trace.map)?.row(0).to_owned())
    }

    pub fn probabilities(&self, params: &ParameterSet, pc: &PointCloud) -> Result<Array1<f64>, PipelineError> {
        let f = self.features(pc)?;
        Ok(softmax(self.logits(params, f.view())?.view()))
    }

    /// Cross-entropy of one sample; parameter gradients are added to `grads`.
    pub fn loss_and_grad(
        &self,
        params: &ParameterSet,
        features: ArrayView2<f64>,
        label: usize,
        grads: &mut ParameterSet,
    ) -> Result<f64, PipelineError> {
        let trace = WrapTrace::forward(&self.group, &self.backbone, params, features, self.pool)?;
        let mut head = Session::new(&self.head);
        let logits = head.forward(params, trace.map.clone())?.row(0).to_owned();
        let (loss, d_logits) = cross_entropy(logits.view(), label)?;
        let d_map = head.backward(params, &d_logits.insert_axis(ndarray::Axis(0)), grads)?;
        trace.backward(params, &d_map, grads)?;
        Ok(loss)
    }

    /// Checks that `params` holds exactly this model's tensors.
    pub fn check_params(&self, params: &ParameterSet) -> Result<(), PipelineError> {
        let specs = self.param_specs();
        if specs.len() != params.len() {
            return Err(PipelineError::Incompatible(format!(
                "model has {} tensors, checkpoint has {}",
                specs.len(),
                params.len()
            )));
        }
        for s in &specs {
            let Some(t) = params.get(&s.name) else {
                return Err(PipelineError::Incompatible(format!("missing tensor `{}`", s.name)));
            };
            if t.dim() != (s.rows, s.cols) {
                return Err(PipelineError::Incompatible(format!(
                    "tensor `{}` is {:?}, model needs {:?}",
                    s.name,
                    t.dim(),
                    (s.rows, s.cols)
                )));
            }
        }
        Ok(())
    }
}

/// Writes parameters and, when given, Adam moments under reserved names.
pub fn save_checkpoint(path: &Path, params: &ParameterSet, adam: Option<&AdamState>) -> Result<(), PipelineError> {
    let mut tensors: Vec<(String, ndarray::ArrayD<f64>)> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone().into_dyn()))
        .collect();
    if let Some(state) = adam {
        for (n, t) in state.m.iter() {
            tensors.push((format!("{ADAM_PREFIX}m/{n}"), t.clone().into_dyn()));
        }
        for (n, t) in state.v.iter() {
            tensors.push((format!("{ADAM_PREFIX}v/{n}"), t.clone().into_dyn()));
        }
        tensors.push((format!("{ADAM_PREFIX}step"), arr0(state.step as f64).into_dyn()));
    }
    Ok(write_checkpoint(path, &tensors)?)
}

/// Reads a checkpoint written by [`save_checkpoint`] and validates it
/// against `model`.
pub fn load_checkpoint(
    path: &Path,
    model: &Classifier,
) -> Result<(ParameterSet, Option<AdamState>), PipelineError> {
    let mut params = ParameterSet::new();
    let mut m = ParameterSet::new();
    let mut v = ParameterSet::new();
    let mut step = None;
    for (name, t) in read_checkpoint(path)? {
        let as2 = |t: ndarray::ArrayD<f64>| {
            t.into_dimensionality::<Ix2>()
                .map_err(|_| PipelineError::Incompatible(format!("tensor `{name}` is not a matrix")))
        };
        if let Some(rest) = name.strip_prefix(ADAM_PREFIX) {
            if rest == "step" {
                step = t.iter().next().map(|&s| s as u64);
            } else if let Some(n) = rest.strip_prefix("m/") {
                m.insert(n, as2(t)?);
            } else if let Some(n) = rest.strip_prefix("v/") {
                v.insert(n, as2(t)?);
            } else {
                return Err(PipelineError::Incompatible(format!("unknown reserved tensor `{name}`")));
            }
        } else {
            params.insert(name.clone(), as2(t)?);
        }
    }
    model.check_params(&params)?;
    let adam = match step {
        Some(step) => {
            model.check_params(&m)?;
            model.check_params(&v)?;
            // restore the parameter ordering used by the optimizer
            let mut state = AdamState::new(&params);
            for (name, t) in state.m.iter_mut() {
                t.assign(m.get(name).expect("checked"));
            }
            for (name, t) in state.v.iter_mut() {
                t.assign(v.get(name).expect("checked"));
            }
            state.step = step;
            Some(state)
        }
        None => None,
    };
    Ok((params, adam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::BackboneKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn xy() -> ChannelLayout {
        ChannelLayout {
            spatial_dim: 2,
            normals: false,
            intensity: true,
        }
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            backbone: BackboneKind::Pointnet,
            group: "c4".into(),
            width: 0.125,
            head_hidden: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn checkpoint_round_trip_with_adam() {
        let model = Classifier::new(&small_cfg(), xy(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = model.init_params(&mut rng);
        let mut adam = AdamState::new(&params);
        adam.step = 7;
        adam.m.scale(0.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.rqck");
        save_checkpoint(&p, &params, Some(&adam)).unwrap();
        let (back, state) = load_checkpoint(&p, &model).unwrap();
        assert_eq!(back, params);
        assert_eq!(state.unwrap(), adam);
        save_checkpoint(&p, &params, None).unwrap();
        assert!(load_checkpoint(&p, &model).unwrap().1.is_none());
    }

    #[test]
    fn checkpoint_rejects_other_model() {
        let model = Classifier::new(&small_cfg(), xy(), 3).unwrap();
        let other = Classifier::new(&small_cfg(), xy(), 4).unwrap();
        let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(2));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.rqck");
        save_checkpoint(&p, &params, None).unwrap();
        assert!(matches!(load_checkpoint(&p, &other), Err(PipelineError::Incompatible(_))));
    }

    #[test]
    fn narrow_backbone_cannot_host_many_classes() {
        let cfg = TrainConfig {
            width: 0.01,
            ..small_cfg()
        };
        assert!(Classifier::new(&cfg, xy(), 10).is_err());
    }

    #[test]
    fn group_must_match_dimension() {
        let cfg = TrainConfig {
            group: "klein4".into(),
            ..small_cfg()
        };
        assert!(Classifier::new(&cfg, xy(), 3).is_err());
    }
}
