//! Point-cloud feature extractors used as the shared branch network.
//!
//! * `pointnet`: shared per-point MLP, then one max-pool over points.
//! * `pointnet_fe`: a first PointNet whose per-point features are concatenated
//!   with its own pooled feature and fed to a second PointNet.
//! * `hier_lite`: farthest-point-sampled centroids, k-nearest-neighbor local
//!   PointNets producing an `m × C′` map, then a global PointNet over the map
//!   rows concatenated with centroid coordinates.
//!
//! Widths at multiplier 1: PointNet 64→128→256; PointNet-FE stage 1 64→128,
//! stage 2 128→256; hier-lite local 64→64 (`C′ = 64`), global 128→256.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::nn::{shape_err, NetworkBuilder, NetworkSpec, NnError, ParamSpec, ParameterSet, Session, Source};
use crate::pointcloud::ChannelLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Pointnet,
    PointnetFe,
    HierLite,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::Pointnet => "pointnet",
            BackboneKind::PointnetFe => "pointnet_fe",
            BackboneKind::HierLite => "hier_lite",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pointnet" => Ok(BackboneKind::Pointnet),
            "pointnet_fe" => Ok(BackboneKind::PointnetFe),
            "hier_lite" => Ok(BackboneKind::HierLite),
            other => Err(format!(
                "unknown backbone `{other}` (expected pointnet, pointnet_fe or hier_lite)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    /// Multiplier applied to every hidden width.
    pub width: f64,
    /// Number of FPS centroids (`hier_lite` only).
    pub centroids: usize,
    /// Neighbors gathered per centroid (`hier_lite` only).
    pub knn: usize,
    /// Concatenate the cross-branch invariant map into every branch
    /// (`hier_lite` only; takes effect inside a group wrapper).
    pub inject: bool,
}

impl BackboneConfig {
    pub fn new(kind: BackboneKind) -> Self {
        Self {
            kind,
            width: 1.0,
            centroids: 32,
            knn: 16,
            inject: false,
        }
    }

    pub fn with_width(mut self, width: f64) -> Self {
        self.width = width;
        self
    }
}

fn scaled(base: usize, mult: f64) -> usize {
    ((base as f64 * mult).round() as usize).max(1)
}

#[derive(Debug, Clone)]
enum Nets {
    Flat(NetworkSpec),
    Hier {
        local: NetworkSpec,
        global: NetworkSpec,
        local_width: usize,
    },
}

/// A backbone network bound to an input channel layout.
#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    layout: ChannelLayout,
    nets: Nets,
}

impl Backbone {
    /// `layout` describes the feature rows the backbone will receive:
    /// spatial coordinates, then normals if `layout.normals`, then intensity.
    pub fn new(config: BackboneConfig, layout: ChannelLayout) -> Result<Self, NnError> {
        if !(config.width > 0.0 && config.width.is_finite()) {
            return Err(NnError::InvalidNetwork(format!(
                "width multiplier must be positive, got {}",
                config.width
            )));
        }
        let input = layout.feature_width(true);
        let m = config.width;
        let nets = match config.kind {
            BackboneKind::Pointnet => {
                let mut b = NetworkBuilder::new(input);
                let h = b.shared_mlp(Source::Input, "pn", &[scaled(64, m), scaled(128, m), scaled(256, m)]);
                let g = b.max_pool(h);
                Nets::Flat(b.finish(g)?)
            }
            BackboneKind::PointnetFe => {
                let mut b = NetworkBuilder::new(input);
                let f = b.shared_mlp(Source::Input, "fe1", &[scaled(64, m), scaled(128, m)]);
                let g1 = b.max_pool(f);
                let cat = b.concat(f, g1);
                let h = b.shared_mlp(cat, "fe2", &[scaled(128, m), scaled(256, m)]);
                let g = b.max_pool(h);
                Nets::Flat(b.finish(g)?)
            }
            BackboneKind::HierLite => {
                if config.centroids == 0 || config.knn == 0 {
                    return Err(NnError::InvalidNetwork(
                        "hier_lite needs centroids >= 1 and knn >= 1".into(),
                    ));
                }
                let local_width = scaled(64, m);
                let mut b = NetworkBuilder::new(input);
                let h = b.shared_mlp(Source::Input, "hl1", &[scaled(64, m), local_width]);
                let p = b.segment_max_pool(h, config.knn);
                let local = b.finish(p)?;
                let map_width = if config.inject { 2 * local_width } else { local_width };
                let mut b = NetworkBuilder::new(map_width + layout.spatial_dim);
                let h = b.shared_mlp(Source::Input, "hl2", &[scaled(128, m), scaled(256, m)]);
                let g = b.max_pool(h);
                Nets::Hier {
                    local,
                    global: b.finish(g)?,
                    local_width,
                }
            }
        };
        Ok(Self {
            config,
            layout,
            nets,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn kind(&self) -> BackboneKind {
        self.config.kind
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn input_width(&self) -> usize {
        self.layout.feature_width(true)
    }

    /// Size `C` of the global feature.
    pub fn output_width(&self) -> usize {
        match &self.nets {
            Nets::Flat(n) => n.output_width(),
            Nets::Hier { global, .. } => global.output_width(),
        }
    }

    /// Width `C′` of the intermediate `hier_lite` map.
    pub fn local_width(&self) -> Option<usize> {
        match &self.nets {
            Nets::Hier { local_width, .. } => Some(*local_width),
            Nets::Flat(_) => None,
        }
    }

    pub fn injects(&self) -> bool {
        self.config.kind == BackboneKind::HierLite && self.config.inject
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match &self.nets {
            Nets::Flat(n) => n.param_specs(),
            Nets::Hier { local, global, .. } => {
                let mut v = local.param_specs();
                v.extend(global.param_specs());
                v
            }
        }
    }

    /// The single network of `pointnet` / `pointnet_fe`.
    pub fn flat_net(&self) -> Option<&NetworkSpec> {
        match &self.nets {
            Nets::Flat(n) => Some(n),
            Nets::Hier { .. } => None,
        }
    }

    /// Local and global networks of `hier_lite`.
    pub fn hier_nets(&self) -> Option<(&NetworkSpec, &NetworkSpec)> {
        match &self.nets {
            Nets::Hier { local, global, .. } => Some((local, global)),
            Nets::Flat(_) => None,
        }
    }

    fn check_input(&self, features: &ArrayView2<f64>) -> Result<(), NnError> {
        if features.ncols() != self.input_width() || features.nrows() == 0 {
            return Err(shape_err(
                format!("{} input", self.kind()),
                format!("N x {}", self.input_width()),
                format!("{} x {}", features.nrows(), features.ncols()),
            ));
        }
        Ok(())
    }

    /// Global feature (`C`) of one cloud given as feature rows.
    ///
    /// For `hier_lite` with injection enabled, a lone cloud is treated as a
    /// one-branch group, so the invariant map equals the cloud's own map.
    pub fn forward(&self, params: &ParameterSet, features: ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        self.check_input(&features)?;
        match &self.nets {
            Nets::Flat(net) => {
                let mut s = Session::new(net);
                Ok(s.forward(params, features.to_owned())?.row(0).to_owned())
            }
            Nets::Hier { .. } => {
                let stage = self.hier_local(params, features)?;
                let map = if self.injects() {
                    ndarray::concatenate(Axis(1), &[stage.map.view(), stage.map.view()])
                        .expect("same rows")
                } else {
                    stage.map.clone()
                };
                self.hier_global(params, &map, &stage.plan.centroids)
                    .map(|(out, _)| out)
            }
        }
    }

    /// Stage 1 of `hier_lite`: grouping plus local PointNets.
    pub fn hier_local<'s>(
        &'s self,
        params: &ParameterSet,
        features: ArrayView2<f64>,
    ) -> Result<LocalStage<'s>, NnError> {
        let Nets::Hier { local, .. } = &self.nets else {
            return Err(NnError::InvalidNetwork(format!(
                "{} has no local stage",
                self.kind()
            )));
        };
        self.check_input(&features)?;
        let d = self.layout.spatial_dim;
        let coords = features.slice(s![.., ..d]);
        let n = features.nrows();
        if self.config.centroids > n || self.config.knn > n {
            return Err(shape_err(
                "hier_lite grouping",
                format!("at least {} points", self.config.centroids.max(self.config.knn)),
                format!("{n} points"),
            ));
        }
        let plan = plan_grouping(coords, self.config.centroids, self.config.knn);
        let grouped = gather_local(features, &plan, d);
        let mut session = Session::new(local);
        let map = session.forward(params, grouped)?.clone();
        Ok(LocalStage { session, plan, map })
    }

    /// Stage 2 of `hier_lite` on an `m × (C′ or 2C′)` map; returns the global
    /// feature and the session for backpropagation.
    pub fn hier_global<'s>(
        &'s self,
        params: &ParameterSet,
        map: &Array2<f64>,
        centroids: &Array2<f64>,
    ) -> Result<(Array1<f64>, Session<'s>), NnError> {
        let Nets::Hier { global, .. } = &self.nets else {
            return Err(NnError::InvalidNetwork(format!(
                "{} has no global stage",
                self.kind()
            )));
        };
        let input = ndarray::concatenate(Axis(1), &[map.view(), centroids.view()]).map_err(|_| {
            shape_err(
                "hier_lite global input",
                format!("{} rows", centroids.nrows()),
                format!("{} rows", map.nrows()),
            )
        })?;
        let mut session = Session::new(global);
        let out = session.forward(params, input)?.row(0).to_owned();
        Ok((out, session))
    }
}

/// Result of the local stage of `hier_lite` for one branch.
#[derive(Debug, Clone)]
pub struct LocalStage<'s> {
    pub session: Session<'s>,
    pub plan: GroupingPlan,
    /// `m × C′`, row `j` belongs to centroid `plan.centroid_idx[j]`.
    pub map: Array2<f64>,
}

/// Centroids and neighborhoods chosen for one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingPlan {
    pub centroid_idx: Vec<usize>,
    /// `m × knn` neighbor indices, nearest first.
    pub neighbors: Vec<Vec<usize>>,
    /// `m × d` centroid coordinates.
    pub centroids: Array2<f64>,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-point sampling of `m` indices from `coords` (`N × d`).
///
/// Starts from the point nearest the centroid; each step adds the point with
/// the largest distance to the chosen set. Ties go to the lowest index.
///
/// # Panics
/// If `m > N`; callers validate sizes first.
pub fn fps_sample(coords: ArrayView2<f64>, m: usize) -> Vec<usize> {
    let n = coords.nrows();
    assert!(m <= n, "cannot sample {m} of {n} points");
    if m == 0 {
        return Vec::new();
    }
    let mean = coords.mean_axis(Axis(0)).expect("non-empty");
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, row) in coords.rows().into_iter().enumerate() {
        let d = sq_dist(row, mean.view());
        if d < best {
            best = d;
            start = i;
        }
    }
    let mut chosen = vec![start];
    let mut min_d: Vec<f64> = coords
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, coords.row(start)))
        .collect();
    while chosen.len() < m {
        let mut next = 0;
        let mut far = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if d > far {
                far = d;
                next = i;
            }
        }
        chosen.push(next);
        let c = coords.row(next);
        for (i, row) in coords.rows().into_iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(row, c));
        }
    }
    chosen
}

/// Indices of the `k` nearest points to `query`, nearest first, ties by index.
pub fn knn_indices(coords: ArrayView2<f64>, query: ndarray::ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = coords
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (sq_dist(r, query), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, i)| i).collect()
}

pub fn plan_grouping(coords: ArrayView2<f64>, m: usize, knn: usize) -> GroupingPlan {
    let centroid_idx = fps_sample(coords, m);
    let neighbors = centroid_idx
        .iter()
        .map(|&c| knn_indices(coords, coords.row(c), knn))
        .collect();
    let centroids = coords.select(Axis(0), &centroid_idx);
    GroupingPlan {
        centroid_idx,
        neighbors,
        centroids,
    }
}

/// Stacks every neighborhood (`m·knn` rows) with spatial columns expressed
/// relative to their centroid. Non-spatial columns are copied unchanged.
pub fn gather_local(features: ArrayView2<f64>, plan: &GroupingPlan, spatial_dim: usize) -> Array2<f64> {
    let knn = plan.neighbors.first().map_or(0, Vec::len);
    let mut out = Array2::zeros((plan.neighbors.len() * knn, features.ncols()));
    for (j, nbrs) in plan.neighbors.iter().enumerate() {
        let c = plan.centroids.row(j);
        for (t, &p) in nbrs.iter().enumerate() {
            let mut row = out.row_mut(j * knn + t);
            row.assign(&features.row(p));
            for k in 0..spatial_dim {
                row[k] -= c[k];
            }
        }
    }
    out
}
