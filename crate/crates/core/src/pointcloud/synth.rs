//! Synthetic surface-sampled shapes with analytic normals.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{PointCloud, PointCloudError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = PointCloudError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PointCloudError::UnknownShape(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct ShapeSet {
    pub class_names: Vec<String>,
    pub records: Vec<PointCloud>,
}

/// Samples `per_class` clouds of each requested shape, shuffled together.
///
/// Cylinders, cones and tori draw their proportions per record (radius,
/// height and tube ratio), so a class covers a family of shapes rather than a
/// single template. Every cloud is centered and scaled to the unit bounding
/// sphere.
pub fn synth_shapes<R: Rng + ?Sized>(
    classes: &[String],
    n_points: usize,
    per_class: usize,
    rng: &mut R,
) -> Result<ShapeSet, PointCloudError> {
    if per_class == 0 {
        return Err(PointCloudError::InvalidArgument(
            "per_class must be at least 1".into(),
        ));
    }
    if n_points < 8 {
        return Err(PointCloudError::InvalidArgument(format!(
            "n_points must be at least 8, got {n_points}"
        )));
    }
    let kinds = classes
        .iter()
        .map(|c| c.parse::<ShapeKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::with_capacity(kinds.len() * per_class);
    for _ in 0..per_class {
        for (label, &kind) in kinds.iter().enumerate() {
            records.push(sample_shape(kind, n_points, label, rng)?);
        }
    }
    records.shuffle(rng);
    Ok(ShapeSet {
        class_names: classes.to_vec(),
        records,
    })
}

fn unit_gaussian3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// One surface sample: position and outward unit normal.
type Sample = ([f64; 3], [f64; 3]);

fn sample_shape<R: Rng + ?Sized>(
    kind: ShapeKind,
    n: usize,
    label: usize,
    rng: &mut R,
) -> Result<PointCloud, PointCloudError> {
    let (samples, radius): (Vec<Sample>, f64) = match kind {
        ShapeKind::Sphere => ((0..n).map(|_| sphere(rng)).collect(), 1.0),
        ShapeKind::Cube => ((0..n).map(|_| cube(rng)).collect(), 3f64.sqrt()),
        ShapeKind::Cylinder => {
            let r: f64 = rng.random_range(0.3..1.0);
            let h: f64 = rng.random_range(0.3..1.0);
            ((0..n).map(|_| cylinder(r, h, rng)).collect(), (r * r + h * h).sqrt())
        }
        ShapeKind::Cone => {
            let r: f64 = rng.random_range(0.3..1.0);
            let h: f64 = rng.random_range(0.5..2.0);
            let radius = (r * r + h * h / 4.0).sqrt();
            ((0..n).map(|_| cone(r, h, rng)).collect(), radius)
        }
        ShapeKind::Torus => {
            let major = 1.0;
            let minor = rng.random_range(0.2..0.5);
            ((0..n).map(|_| torus(major, minor, rng)).collect(), major + minor)
        }
    };
    let coords = Array2::from_shape_fn((n, 3), |(i, j)| samples[i].0[j] / radius);
    let normals = Array2::from_shape_fn((n, 3), |(i, j)| samples[i].1[j]);
    PointCloud::new(coords, label)?.with_normals(normals)
}

fn sphere<R: Rng + ?Sized>(rng: &mut R) -> Sample {
    let p = unit_gaussian3(rng);
    (p, p)
}

fn cube<R: Rng + ?Sized>(rng: &mut R) -> Sample {
    let face = rng.random_range(0..6);
    let axis = face / 2;
    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
    let mut p = [0.0; 3];
    let mut nrm = [0.0; 3];
    for (k, v) in p.iter_mut().enumerate() {
        *v = if k == axis {
            sign
        } else {
            rng.random_range(-1.0..1.0)
        };
    }
    nrm[axis] = sign;
    (p, nrm)
}

fn cylinder<R: Rng + ?Sized>(r: f64, h: f64, rng: &mut R) -> Sample {
    // half-height h; areas: side 4πrh, each cap πr²
    let side = 4.0 * PI * r * h;
    let cap = PI * r * r;
    let u = rng.random_range(0.0..side + 2.0 * cap);
    let theta = rng.random_range(0.0..2.0 * PI);
    if u < side {
        let z = rng.random_range(-h..h);
        ([r * theta.cos(), r * theta.sin(), z], [theta.cos(), theta.sin(), 0.0])
    } else {
        let rho = r * rng.random::<f64>().sqrt();
        let sign = if u < side + cap { 1.0 } else { -1.0 };
        (
            [rho * theta.cos(), rho * theta.sin(), sign * h],
            [0.0, 0.0, sign],
        )
    }
}

fn cone<R: Rng + ?Sized>(r: f64, h: f64, rng: &mut R) -> Sample {
    // apex at z = h/2, base disk at z = -h/2
    let slant = (r * r + h * h).sqrt();
    let lateral = PI * r * slant;
    let base = PI * r * r;
    let theta = rng.random_range(0.0..2.0 * PI);
    if rng.random_range(0.0..lateral + base) < lateral {
        // radius grows linearly from the apex: density ∝ distance from apex
        let v = rng.random::<f64>().sqrt();
        let rho = r * v;
        let z = h / 2.0 - h * v;
        let nrm = normalize([h * theta.cos(), h * theta.sin(), r]);
        ([rho * theta.cos(), rho * theta.sin(), z], nrm)
    } else {
        let rho = r * rng.random::<f64>().sqrt();
        (
            [rho * theta.cos(), rho * theta.sin(), -h / 2.0],
            [0.0, 0.0, -1.0],
        )
    }
}

fn torus<R: Rng + ?Sized>(major: f64, minor: f64, rng: &mut R) -> Sample {
    let phi = rng.random_range(0.0..2.0 * PI);
    // area element ∝ (R + a cos θ): rejection sample θ
    let theta = loop {
        let t = rng.random_range(0.0..2.0 * PI);
        if rng.random_range(0.0..major + minor) < major + minor * t.cos() {
            break t;
        }
    };
    let ring = major + minor * theta.cos();
    (
        [ring * phi.cos(), ring * phi.sin(), minor * theta.sin()],
        [theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin()],
    )
}
