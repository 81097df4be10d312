use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PointCloud, PointCloudError};
use crate::rotgroup::RotationMatrix;

/// How random rotations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    /// Uniform angle about the z-axis (or the plane origin in 2D).
    Z,
    /// Haar-uniform over SO(3).
    So3,
}

impl fmt::Display for RotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RotationMode::Z => "z",
            RotationMode::So3 => "so3",
        })
    }
}

impl FromStr for RotationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "z" => Ok(RotationMode::Z),
            "so3" => Ok(RotationMode::So3),
            other => Err(format!("unknown rotation mode `{other}` (expected z or so3)")),
        }
    }
}

pub fn random_rotation<R: Rng + ?Sized>(
    dim: usize,
    mode: RotationMode,
    rng: &mut R,
) -> Result<RotationMatrix, PointCloudError> {
    match mode {
        RotationMode::Z => {
            let angle = rng.random_range(0.0..2.0 * PI);
            Ok(RotationMatrix::about_z(angle, dim)?)
        }
        RotationMode::So3 if dim != 3 => Err(PointCloudError::InvalidArgument(
            "so3 rotations need 3D data".into(),
        )),
        RotationMode::So3 => {
            // Shoemake's uniform unit quaternion
            let u1: f64 = rng.random();
            let u2: f64 = rng.random_range(0.0..2.0 * PI);
            let u3: f64 = rng.random_range(0.0..2.0 * PI);
            let a = (1.0 - u1).sqrt();
            let b = u1.sqrt();
            let q = [b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin()];
            Ok(RotationMatrix::from_quaternion(q))
        }
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise to every coordinate, then scales the
/// whole cloud by one factor drawn uniformly from `scale_range`.
pub fn jitter_scale<R: Rng + ?Sized>(
    pc: &PointCloud,
    sigma: f64,
    scale_range: (f64, f64),
    rng: &mut R,
) -> Result<PointCloud, PointCloudError> {
    let (lo, hi) = scale_range;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PointCloudError::InvalidArgument(format!(
            "jitter sigma must be >= 0, got {sigma}"
        )));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(PointCloudError::InvalidArgument(format!(
            "scale range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let mut coords = pc.coords.clone();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("sigma checked");
        coords.mapv_inplace(|v| v + noise.sample(rng));
    }
    let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    if scale != 1.0 {
        coords.mapv_inplace(|v| v * scale);
    }
    if sigma == 0.0 && scale == 1.0 {
        return Ok(pc.clone());
    }
    let normals = pc.normals.as_ref().map(|n| {
        let norms = n.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        n / &norms.insert_axis(Axis(1))
    });
    Ok(PointCloud {
        coords,
        normals,
        intensity: pc.intensity.clone(),
        label: pc.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_rotations_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            random_rotation(3, RotationMode::So3, &mut rng)
                .unwrap()
                .validate()
                .unwrap();
            random_rotation(2, RotationMode::Z, &mut rng)
                .unwrap()
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn z_rotations_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = random_rotation(3, RotationMode::Z, &mut rng).unwrap();
            let b = random_rotation(3, RotationMode::Z, &mut rng).unwrap();
            assert!(a.mul(&b).frobenius_distance(&b.mul(&a)) < 1e-9);
        }
    }

    #[test]
    fn so3_in_2d_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(random_rotation(2, RotationMode::So3, &mut rng).is_err());
    }

    #[test]
    fn so3_column_means_vanish() {
        // Haar measure: E[R] = 0, so every entry averages to zero.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 10_000;
        let mut sum = [[0.0; 3]; 3];
        for _ in 0..draws {
            let r = random_rotation(3, RotationMode::So3, &mut rng).unwrap();
            for (i, row) in sum.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += r.get(i, j);
                }
            }
        }
        for row in sum {
            for v in row {
                assert!((v / draws as f64).abs() < 0.05, "{}", v / draws as f64);
            }
        }
    }

    #[test]
    fn jitter_identity_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let coords: Array2<f64> = Array2::from_shape_fn((500, 3), |_| normal.sample(&mut rng));
        let norms = coords.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        let sphere = &coords / &norms.insert_axis(Axis(1));
        let pc = PointCloud::new(sphere.clone(), 4)
            .unwrap()
            .with_normals(sphere)
            .unwrap();

        let same = jitter_scale(&pc, 0.0, (1.0, 1.0), &mut rng).unwrap();
        assert_eq!(same, pc);

        let sigma = 0.01;
        let out = jitter_scale(&pc, sigma, (0.9, 1.1), &mut rng).unwrap();
        assert_eq!(out.label, 4);
        for r in out.coords.rows() {
            let rad = r.dot(&r).sqrt();
            assert!(rad >= 0.9 - 5.0 * sigma && rad <= 1.1 + 5.0 * sigma, "{rad}");
        }
        out.validate().unwrap();
    }

    #[test]
    fn jitter_rejects_bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pc = PointCloud::new(Array2::zeros((2, 3)), 0).unwrap();
        assert!(jitter_scale(&pc, -1.0, (1.0, 1.0), &mut rng).is_err());
        assert!(jitter_scale(&pc, 0.1, (0.0, 1.0), &mut rng).is_err());
        assert!(jitter_scale(&pc, 0.1, (1.2, 1.0), &mut rng).is_err());
    }
}
