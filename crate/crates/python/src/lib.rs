//! Python bindings: groups, wrapped backbones, dataset preparation, training
//! and evaluation. Point clouds cross the boundary as lists of rows.

use std::fmt::Display;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotequiv::backbones::{Backbone, BackboneConfig, BackboneKind};
use rotequiv::equivariance;
use rotequiv::nn::ParameterSet;
use rotequiv::pipeline::{self, EvalOptions, SplitSizes, TrainConfig};
use rotequiv::pointcloud::{ChannelLayout, PointCloud, RotationMode};
use rotequiv::rotgroup::{verify_group, RotationGroup, BUILTIN_GROUPS};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

pub fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err("ragged point list".into());
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| e.to_string())
}

pub fn array_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_mode(mode: &str) -> PyResult<RotationMode> {
    mode.parse().map_err(value_err)
}

#[pyfunction]
fn group_names() -> Vec<&'static str> {
    BUILTIN_GROUPS.to_vec()
}

#[pyclass(name = "Group", frozen)]
struct PyGroup {
    inner: RotationGroup,
}

#[pymethods]
impl PyGroup {
    #[new]
    #[pyo3(signature = (name, dim = 3))]
    fn new(name: &str, dim: usize) -> PyResult<Self> {
        Ok(Self {
            inner: RotationGroup::by_name(name, dim).map_err(value_err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn elements(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.elements().iter().map(|m| m.rows()).collect()
    }

    fn cayley(&self) -> Vec<Vec<usize>> {
        self.inner.cayley().to_vec()
    }

    /// Branch permutation predicted for rotating the input by element `r`.
    fn permutation(&self, r: usize) -> PyResult<Vec<usize>> {
        Ok(self.inner.expected_permutation(r).map_err(value_err)?.mapping)
    }

    /// `(passed, summary)` from the axiom checks.
    fn verify(&self) -> (bool, String) {
        let report = verify_group(&self.inner);
        (report.passed(), report.summary())
    }

    fn __repr__(&self) -> String {
        format!("Group({:?}, order={}, dim={})", self.inner.name(), self.inner.order(), self.inner.dim())
    }
}

/// A backbone with its own randomly initialised weights.
#[pyclass(name = "Backbone", frozen)]
struct PyBackbone {
    inner: Backbone,
    params: ParameterSet,
}

impl PyBackbone {
    fn cloud(&self, points: Vec<Vec<f64>>) -> PyResult<PointCloud> {
        PointCloud::new(rows_to_array(&points).map_err(value_err)?, 0).map_err(value_err)
    }
}

#[pymethods]
impl PyBackbone {
    #[new]
    #[pyo3(signature = (kind, dim = 3, width = 1.0, seed = 0, centroids = 32, knn = 16, inject = false))]
    fn new(
        kind: &str,
        dim: usize,
        width: f64,
        seed: u64,
        centroids: usize,
        knn: usize,
        inject: bool,
    ) -> PyResult<Self> {
        let kind: BackboneKind = kind.parse().map_err(value_err)?;
        let cfg = BackboneConfig {
            centroids,
            knn,
            inject,
            ..BackboneConfig::new(kind).with_width(width)
        };
        let layout = ChannelLayout {
            spatial_dim: dim,
            normals: false,
            intensity: false,
        };
        let inner = Backbone::new(cfg, layout).map_err(value_err)?;
        let params = ParameterSet::init(&inner.param_specs(), &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { inner, params })
    }

    #[getter]
    fn output_width(&self) -> usize {
        self.inner.output_width()
    }

    /// Global feature of one cloud, without the group wrapper.
    fn forward(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_array(&points).map_err(value_err)?;
        Ok(self.inner.forward(&self.params, x.view()).map_err(value_err)?.to_vec())
    }

    /// Group feature map, one row per group element.
    fn wrap_forward(&self, group: &PyGroup, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let pc = self.cloud(points)?;
        let map = equivariance::wrap_forward(&group.inner, &self.inner, &self.params, &pc).map_err(value_err)?;
        Ok(array_to_rows(&map.features))
    }

    #[pyo3(signature = (group, points, r, tol = 1e-9))]
    fn check_equivariance<'py>(
        &self,
        py: Python<'py>,
        group: &PyGroup,
        points: Vec<Vec<f64>>,
        r: usize,
        tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let pc = self.cloud(points)?;
        let rep = equivariance::check_equivariance(&group.inner, &self.inner, &self.params, &pc, r, tol)
            .map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("permutation", rep.permutation.mapping)?;
        d.set_item("residual", rep.residual)?;
        d.set_item("passed", rep.passed)?;
        Ok(d)
    }
}

/// Writes a synthetic shape dataset and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out, points = 128, train = 40, val = 10, test = 20, seed = 0, rotate = None, shapes = None))]
#[allow(clippy::too_many_arguments)]
fn prepare_synth(
    out: PathBuf,
    points: usize,
    train: usize,
    val: usize,
    test: usize,
    seed: u64,
    rotate: Option<&str>,
    shapes: Option<Vec<String>>,
) -> PyResult<String> {
    let rotate = rotate.map(parse_mode).transpose()?;
    let shapes = shapes.unwrap_or_else(|| ["sphere", "cube", "cylinder", "cone", "torus"].map(String::from).to_vec());
    let sizes = SplitSizes { train, val, test };
    let s = pipeline::prepare_synth(&out, &shapes, points, sizes, rotate, seed).map_err(value_err)?;
    Ok(s.manifest_path.display().to_string())
}

/// Trains from a TOML config and writes the checkpoint and config into `out`.
/// Returns the per-epoch mean losses.
#[pyfunction]
fn train(py: Python<'_>, config_toml: &str, out: PathBuf) -> PyResult<Vec<f64>> {
    let cfg = TrainConfig::from_toml(config_toml).map_err(value_err)?;
    py.detach(|| -> Result<Vec<f64>, pipeline::PipelineError> {
        let (_, data) = pipeline::load_train_data(&cfg.manifest)?;
        let outcome = pipeline::train(&cfg, &data, &mut |_| {})?;
        std::fs::create_dir_all(&out).map_err(|e| pipeline::PipelineError::Io {
            path: out.clone(),
            source: e,
        })?;
        cfg.save(&out.join(pipeline::CONFIG_FILE))?;
        pipeline::save_checkpoint(&out.join(pipeline::CHECKPOINT_FILE), &outcome.params, Some(&outcome.adam))?;
        Ok(outcome.epochs.iter().map(|e| e.loss).collect())
    })
    .map_err(value_err)
}

/// Evaluates a checkpoint written by `train` on a manifest split.
#[pyfunction]
#[pyo3(signature = (checkpoint, split = "test", rotations = 1, mode = "z", seed = 0))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint: PathBuf,
    split: &str,
    rotations: usize,
    mode: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = EvalOptions {
        rotations,
        mode: parse_mode(mode)?,
        seed,
    };
    let dir = checkpoint.parent().map(PathBuf::from).unwrap_or_default();
    let cfg = TrainConfig::load(&dir.join(pipeline::CONFIG_FILE)).map_err(value_err)?;
    let r = py
        .detach(|| pipeline::evaluate_checkpoint(&checkpoint, &cfg, &cfg.manifest, split, &opts))
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("instance_accuracy", r.instance_accuracy)?;
    d.set_item("class_accuracy", r.class_accuracy)?;
    d.set_item("confusion", r.confusion)?;
    d.set_item("predictions", r.predictions)?;
    Ok(d)
}

#[pymodule]
fn rotequiv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGroup>()?;
    m.add_class::<PyBackbone>()?;
    m.add_function(wrap_pyfunction!(group_names, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let a = rows_to_array(&rows).unwrap();
        assert_eq!(a.dim(), (2, 3));
        assert_eq!(array_to_rows(&a), rows);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(rows_to_array(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
