use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;

use super::{PointCloud, PointCloudError};

/// Converts a grayscale raster (values in `[0, 1]`) into a 2D point cloud with
/// an intensity channel and exactly `target_n` points.
///
/// Every non-zero pixel becomes a point `(x, y)` with x to the right and y
/// upward, centered on the mean of the non-zero pixel positions and scaled so
/// the largest absolute coordinate is 1. Clouds with too few pixels are padded
/// with points interpolated between uniformly chosen pairs of source points
/// (coordinates and intensity alike); clouds with too many are subsampled
/// uniformly without replacement, keeping raster order.
pub fn image_to_pointcloud<R: Rng + ?Sized>(
    image: &Array2<f64>,
    target_n: usize,
    label: usize,
    rng: &mut R,
) -> Result<PointCloud, PointCloudError> {
    if target_n == 0 {
        return Err(PointCloudError::InvalidArgument(
            "target point count must be at least 1".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vals = Vec::new();
    for ((row, col), &v) in image.indexed_iter() {
        if v != 0.0 {
            xs.push(col as f64);
            ys.push(-(row as f64));
            vals.push(v);
        }
    }
    let n = xs.len();
    if n == 0 {
        return Err(PointCloudError::EmptyImage);
    }
    let cx = xs.iter().sum::<f64>() / n as f64;
    let cy = ys.iter().sum::<f64>() / n as f64;
    let max_abs = xs
        .iter()
        .map(|x| (x - cx).abs())
        .chain(ys.iter().map(|y| (y - cy).abs()))
        .fold(0.0f64, f64::max);
    let scale = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
    let mut coords: Vec<[f64; 2]> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| [(x - cx) * scale, (y - cy) * scale])
        .collect();

    if n > target_n {
        let mut keep = index::sample(rng, n, target_n).into_vec();
        keep.sort_unstable();
        coords = keep.iter().map(|&i| coords[i]).collect();
        vals = keep.iter().map(|&i| vals[i]).collect();
    } else {
        while coords.len() < target_n {
            let a = rng.random_range(0..n);
            let b = if n > 1 {
                // distinct partner
                let b = rng.random_range(0..n - 1);
                if b >= a {
                    b + 1
                } else {
                    b
                }
            } else {
                a
            };
            let t: f64 = rng.random();
            let (pa, pb) = (coords[a], coords[b]);
            coords.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            vals.push(vals[a] + t * (vals[b] - vals[a]));
        }
    }

    let coords = Array2::from_shape_fn((target_n, 2), |(i, j)| coords[i][j]);
    PointCloud::new(coords, label)?.with_intensity(Array1::from(vals))
}
