//! Group wrapper around a backbone.
//!
//! Branch `i` evaluates the shared backbone on the input rotated by group
//! element `r_i`, so the `k × C` map obeys `Φ(T_r x)[i] = Φ(x)[π(i)]` with
//! `π(i) = cayley[i][r]`. Pooling over branches gives invariance.
//!
//! For `hier_lite` with injection, the intermediate `m × C′` maps are pooled
//! across branches into an invariant map that is concatenated back into each
//! branch. Branch rows are indexed by FPS centroids, so rows are aligned by
//! rotating each branch's centroids back by `r_i⁻¹` and matching them to the
//! nearest branch-0 centroid (lowest index on ties).

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbones::Backbone;
use crate::nn::{NnError, ParameterSet, Session};
use crate::pointcloud::{apply_rotation, rotate_features, rotation_transpose, PointCloud, PointCloudError};
use crate::rotgroup::{GroupError, GroupPermutation, RotationGroup};

#[derive(Debug, Error)]
pub enum EquivError {
    #[error("group `{group}` acts on {group_dim}D points but the input is {input_dim}D")]
    DimensionMismatch {
        group: String,
        group_dim: usize,
        input_dim: usize,
    },
    #[error("branch maps disagree in shape: {0}")]
    BranchShape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    PointCloud(#[from] PointCloudError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Max,
    Avg,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Max => "max",
            PoolMode::Avg => "avg",
        })
    }
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(PoolMode::Max),
            "avg" => Ok(PoolMode::Avg),
            other => Err(format!("unknown pool mode `{other}` (expected max or avg)")),
        }
    }
}

/// `k × C` branch features; row `i` came from the input rotated by `r_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeatureMap {
    pub group: String,
    pub features: Array2<f64>,
}

impl GroupFeatureMap {
    pub fn order(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivReport {
    pub group: String,
    pub r_index: usize,
    pub permutation: GroupPermutation,
    /// Max over branches of the max-abs difference `B[i] − A[π(i)]`.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Column-wise max or mean over the rows of a map.
pub fn pool_invariant(map: ArrayView2<f64>, mode: PoolMode) -> Array1<f64> {
    match mode {
        PoolMode::Max => map.fold_axis(Axis(0), f64::NEG_INFINITY, |&m, &v| m.max(v)),
        PoolMode::Avg => map.mean_axis(Axis(0)).expect("non-empty map"),
    }
}

fn check_dims(group: &RotationGroup, backbone: &Backbone, features: &ArrayView2<f64>) -> Result<(), EquivError> {
    let d = backbone.layout().spatial_dim;
    if group.dim() != d {
        return Err(EquivError::DimensionMismatch {
            group: group.name().to_string(),
            group_dim: group.dim(),
            input_dim: d,
        });
    }
    if features.ncols() != backbone.input_width() {
        return Err(NnError::Shape {
            context: "group wrapper input".into(),
            expected: format!("N x {}", backbone.input_width()),
            actual: format!("{} x {}", features.nrows(), features.ncols()),
        }
        .into());
    }
    Ok(())
}

/// Feature rows of `pc` in the layout the backbone expects.
pub fn backbone_features(backbone: &Backbone, pc: &PointCloud) -> Result<Array2<f64>, EquivError> {
    let layout = backbone.layout();
    if pc.dim() != layout.spatial_dim {
        return Err(PointCloudError::DimensionMismatch {
            expected: layout.spatial_dim,
            actual: pc.dim(),
        }
        .into());
    }
    let f = pc.features(layout.normals);
    if f.ncols() != backbone.input_width() {
        return Err(NnError::Shape {
            context: format!("{} channels", backbone.kind()),
            expected: layout.to_string(),
            actual: pc.layout().to_string(),
        }
        .into());
    }
    Ok(f)
}

/// The group feature map `Φ(pc)`; injection, if enabled, pools with `max`.
pub fn wrap_forward(
    group: &RotationGroup,
    backbone: &Backbone,
    params: &ParameterSet,
    pc: &PointCloud,
) -> Result<GroupFeatureMap, EquivError> {
    let f = backbone_features(backbone, pc)?;
    let trace = WrapTrace::forward(group, backbone, params, f.view(), PoolMode::Max)?;
    Ok(GroupFeatureMap {
        group: group.name().to_string(),
        features: trace.map,
    })
}

/// Compares `Φ(T_r pc)` against `Φ(pc)` permuted by the Cayley prediction.
pub fn check_equivariance(
    group: &RotationGroup,
    backbone: &Backbone,
    params: &ParameterSet,
    pc: &PointCloud,
    r_index: usize,
    tol: f64,
) -> Result<EquivReport, EquivError> {
    let permutation = group.expected_permutation(r_index)?;
    let a = wrap_forward(group, backbone, params, pc)?;
    let rotated = apply_rotation(pc, group.element(r_index)?)?;
    let b = wrap_forward(group, backbone, params, &rotated)?;
    let residual = permuted_residual(a.features.view(), b.features.view(), &permutation.mapping);
    Ok(EquivReport {
        group: group.name().to_string(),
        r_index,
        permutation,
        residual,
        tolerance: tol,
        passed: residual < tol,
    })
}

/// `max_i max_c |b[i][c] − a[perm[i]][c]|`.
pub fn permuted_residual(a: ArrayView2<f64>, b: ArrayView2<f64>, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &p)| {
            b.row(i)
                .iter()
                .zip(a.row(p).iter())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        })
        .fold(0.0, f64::max)
}

/// Smallest residual over row assignments `b[i] ↔ a[σ(i)]`.
///
/// Exhaustive for up to `exhaustive_max` rows; otherwise `samples` seeded
/// random permutations plus the identity.
pub fn best_alignment(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    exhaustive_max: usize,
    samples: usize,
    seed: u64,
) -> (Vec<usize>, f64) {
    let k = a.nrows();
    let mut best = ((0..k).collect::<Vec<_>>(), f64::INFINITY);
    let mut consider = |perm: Vec<usize>| {
        let r = permuted_residual(a, b, &perm);
        if r < best.1 {
            best = (perm, r);
        }
    };
    if k <= exhaustive_max {
        for perm in (0..k).permutations(k) {
            consider(perm);
        }
    } else {
        consider((0..k).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..k).collect();
        for _ in 0..samples {
            perm.shuffle(&mut rng);
            consider(perm.clone());
        }
    }
    best
}

/// Row correspondence between branches, derived from centroid positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchAlignment {
    /// `to_branch[i][p]`: row of branch `i` matching branch-0 row `p`.
    pub to_branch: Vec<Vec<usize>>,
    /// `to_base[i][q]`: branch-0 row matching row `q` of branch `i`.
    pub to_base: Vec<Vec<usize>>,
}

fn nearest_row(rows: ArrayView2<f64>, q: ndarray::ArrayView1<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, r) in rows.rows().into_iter().enumerate() {
        let d: f64 = r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Aligns branch rows given each branch's centroids (`m × d`, in the branch's
/// rotated frame).
pub fn align_branches(group: &RotationGroup, centroids: &[Array2<f64>]) -> Result<BranchAlignment, EquivError> {
    if centroids.len() != group.order() {
        return Err(EquivError::BranchShape(format!(
            "{} centroid sets for a group of order {}",
            centroids.len(),
            group.order()
        )));
    }
    let base = &centroids[0];
    let mut to_branch = Vec::with_capacity(centroids.len());
    let mut to_base = Vec::with_capacity(centroids.len());
    for (i, c) in centroids.iter().enumerate() {
        if c.dim() != base.dim() {
            return Err(EquivError::BranchShape(format!(
                "branch {i} centroids {:?} vs {:?}",
                c.dim(),
                base.dim()
            )));
        }
        // c = c0 · r_iᵀ, so c · r_i recovers the base frame.
        let back = c.dot(&rotation_transpose(group.element(i)?).t());
        to_branch.push(base.rows().into_iter().map(|p| nearest_row(back.view(), p)).collect());
        to_base.push(back.rows().into_iter().map(|q| nearest_row(base.view(), q)).collect());
    }
    Ok(BranchAlignment { to_branch, to_base })
}

/// Element-wise pool of aligned branch maps, concatenated back onto each
/// branch: `k` maps of `m × C′` become `k` maps of `m × 2C′`.
pub fn hier_inject(
    maps: &[Array2<f64>],
    alignment: &BranchAlignment,
    mode: PoolMode,
) -> Result<Vec<Array2<f64>>, EquivError> {
    Ok(Injection::compute(maps, alignment, mode)?.outputs)
}

struct Injection {
    outputs: Vec<Array2<f64>>,
    /// Winning branch per invariant-map entry (max mode).
    argmax: Option<Array2<usize>>,
    mode: PoolMode,
    to_branch: Vec<Vec<usize>>,
    to_base: Vec<Vec<usize>>,
}

impl Injection {
    fn compute(maps: &[Array2<f64>], alignment: &BranchAlignment, mode: PoolMode) -> Result<Self, EquivError> {
        let Some(first) = maps.first() else {
            return Err(EquivError::BranchShape("no branches".into()));
        };
        let (m, c) = first.dim();
        for (i, map) in maps.iter().enumerate() {
            if map.dim() != (m, c) {
                return Err(EquivError::BranchShape(format!("branch {i} is {:?}, branch 0 is {:?}", map.dim(), (m, c))));
            }
        }
        if alignment.to_branch.len() != maps.len() || alignment.to_branch.iter().any(|a| a.len() != m) {
            return Err(EquivError::BranchShape("alignment does not match the maps".into()));
        }
        let k = maps.len();
        let mut inv = Array2::zeros((m, c));
        let mut argmax = (mode == PoolMode::Max).then(|| Array2::zeros((m, c)));
        for p in 0..m {
            for ch in 0..c {
                match mode {
                    PoolMode::Max => {
                        let mut best = (f64::NEG_INFINITY, 0);
                        for (i, map) in maps.iter().enumerate() {
                            let v = map[[alignment.to_branch[i][p], ch]];
                            if v > best.0 {
                                best = (v, i);
                            }
                        }
                        inv[[p, ch]] = best.0;
                        argmax.as_mut().expect("max mode")[[p, ch]] = best.1;
                    }
                    PoolMode::Avg => {
                        let sum: f64 = maps
                            .iter()
                            .enumerate()
                            .map(|(i, map)| map[[alignment.to_branch[i][p], ch]])
                            .sum();
                        inv[[p, ch]] = sum / k as f64;
                    }
                }
            }
        }
        let outputs = maps
            .iter()
            .enumerate()
            .map(|(i, map)| {
                let aligned = inv.select(Axis(0), &alignment.to_base[i]);
                ndarray::concatenate(Axis(1), &[map.view(), aligned.view()]).expect("same rows")
            })
            .collect();
        Ok(Self {
            outputs,
            argmax,
            mode,
            to_branch: alignment.to_branch.clone(),
            to_base: alignment.to_base.clone(),
        })
    }

    /// Gradients of the `k` input maps given gradients of the outputs.
    fn backward(&self, d_out: &[Array2<f64>]) -> Vec<Array2<f64>> {
        let k = d_out.len();
        let (m, two_c) = d_out[0].dim();
        let c = two_c / 2;
        let mut d_maps: Vec<Array2<f64>> = d_out.iter().map(|d| d.slice(s![.., ..c]).to_owned()).collect();
        let mut d_inv = Array2::<f64>::zeros((m, c));
        for (i, d) in d_out.iter().enumerate() {
            for (q, &p) in self.to_base[i].iter().enumerate() {
                let mut row = d_inv.row_mut(p);
                row += &d.slice(s![q, c..]);
            }
        }
        for p in 0..m {
            for ch in 0..c {
                let g = d_inv[[p, ch]];
                match self.mode {
                    PoolMode::Max => {
                        let i = self.argmax.as_ref().expect("max mode")[[p, ch]];
                        d_maps[i][[self.to_branch[i][p], ch]] += g;
                    }
                    PoolMode::Avg => {
                        for (i, d) in d_maps.iter_mut().enumerate() {
                            d[[self.to_branch[i][p], ch]] += g / k as f64;
                        }
                    }
                }
            }
        }
        d_maps
    }
}

enum Branches<'s> {
    Flat(Vec<Session<'s>>),
    Hier {
        local: Vec<Session<'s>>,
        global: Vec<Session<'s>>,
        injection: Option<Injection>,
        spatial_dim: usize,
    },
}

/// Forward pass through every branch, retaining what backpropagation needs.
pub struct WrapTrace<'s> {
    pub map: Array2<f64>,
    branches: Branches<'s>,
}

impl<'s> WrapTrace<'s> {
    /// `features` are the unrotated input rows. `inject_mode` selects the
    /// cross-branch pool used by `hier_lite` injection.
    pub fn forward(
        group: &RotationGroup,
        backbone: &'s Backbone,
        params: &ParameterSet,
        features: ArrayView2<f64>,
        inject_mode: PoolMode,
    ) -> Result<Self, EquivError> {
        check_dims(group, backbone, &features)?;
        let normals = backbone.layout().normals;
        let owned = features.to_owned();
        let inputs: Vec<Array2<f64>> = group
            .elements()
            .iter()
            .map(|r| rotate_features(&owned, r, normals))
            .collect();
        let k = group.order();
        let mut map = Array2::zeros((k, backbone.output_width()));
        if let Some(net) = backbone.flat_net() {
            let mut sessions = Vec::with_capacity(k);
            for (i, x) in inputs.into_iter().enumerate() {
                let mut s = Session::new(net);
                map.row_mut(i).assign(&s.forward(params, x)?.row(0));
                sessions.push(s);
            }
            return Ok(Self {
                map,
                branches: Branches::Flat(sessions),
            });
        }
        let mut local = Vec::with_capacity(k);
        let mut maps = Vec::with_capacity(k);
        let mut centroids = Vec::with_capacity(k);
        for x in &inputs {
            let stage = backbone.hier_local(params, x.view())?;
            local.push(stage.session);
            maps.push(stage.map);
            centroids.push(stage.plan.centroids);
        }
        let injection = if backbone.injects() {
            let alignment = align_branches(group, &centroids)?;
            Some(Injection::compute(&maps, &alignment, inject_mode)?)
        } else {
            None
        };
        let mut global = Vec::with_capacity(k);
        for i in 0..k {
            let stage_in = injection.as_ref().map_or(&maps[i], |inj| &inj.outputs[i]);
            let (out, s) = backbone.hier_global(params, stage_in, &centroids[i])?;
            map.row_mut(i).assign(&out);
            global.push(s);
        }
        Ok(Self {
            map,
            branches: Branches::Hier {
                local,
                global,
                injection,
                spatial_dim: backbone.layout().spatial_dim,
            },
        })
    }

    /// Accumulates parameter gradients for upstream gradient `d_map` (`k × C`).
    pub fn backward(&self, params: &ParameterSet, d_map: &Array2<f64>, grads: &mut ParameterSet) -> Result<(), EquivError> {
        if d_map.dim() != self.map.dim() {
            return Err(NnError::Shape {
                context: "group map gradient".into(),
                expected: format!("{:?}", self.map.dim()),
                actual: format!("{:?}", d_map.dim()),
            }
            .into());
        }
        match &self.branches {
            Branches::Flat(sessions) => {
                for (i, s) in sessions.iter().enumerate() {
                    s.backward(params, &d_map.slice(s![i..i + 1, ..]).to_owned(), grads)?;
                }
            }
            Branches::Hier {
                local,
                global,
                injection,
                spatial_dim,
            } => {
                let mut d_stage_in = Vec::with_capacity(global.len());
                for (i, s) in global.iter().enumerate() {
                    let d_in = s.backward(params, &d_map.slice(s![i..i + 1, ..]).to_owned(), grads)?;
                    let width = d_in.ncols() - spatial_dim;
                    d_stage_in.push(d_in.slice(s![.., ..width]).to_owned());
                }
                let d_maps = match injection {
                    Some(inj) => inj.backward(&d_stage_in),
                    None => d_stage_in,
                };
                for (s, d) in local.iter().zip(d_maps.iter()) {
                    s.backward(params, d, grads)?;
                }
            }
        }
        Ok(())
    }
}

/// Input rows rotated by the group element at `r_index`.
pub fn rotate_input(group: &RotationGroup, pc: &PointCloud, r_index: usize) -> Result<PointCloud, EquivError> {
    Ok(apply_rotation(pc, group.element(r_index)?)?)
}
