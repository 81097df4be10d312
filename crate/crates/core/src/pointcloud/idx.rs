//! Reader for the IDX container used by the MNIST digit files.
//!
//! Layout: big-endian `u32` magic `0x0000TTNN` (type `TT`, rank `NN`), `NN`
//! big-endian `u32` dimensions, then the row-major payload. Only unsigned
//! byte payloads (`TT = 0x08`) are supported. Gzip-compressed files are
//! detected by their header and inflated transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;
use ndarray::Array2;

use super::PointCloudError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn count(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }
}

pub fn read_idx(path: &Path) -> Result<IdxArray, PointCloudError> {
    let raw = fs::read(path).map_err(|e| PointCloudError::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| PointCloudError::io(path, e))?;
        out
    } else {
        raw
    };
    read_idx_bytes(&bytes, &path.display().to_string())
}

/// Parses an in-memory IDX file; `origin` names the source in errors.
pub fn read_idx_bytes(bytes: &[u8], origin: &str) -> Result<IdxArray, PointCloudError> {
    let truncated = |offset: usize, needed: usize| PointCloudError::Truncated {
        path: origin.to_string(),
        offset,
        needed,
    };
    if bytes.len() < 4 {
        return Err(truncated(bytes.len(), 4 - bytes.len()));
    }
    let magic = BigEndian::read_u32(&bytes[0..4]);
    let rank = (magic & 0xff) as usize;
    if magic >> 16 != 0 || (magic >> 8) & 0xff != 0x08 || rank == 0 {
        return Err(PointCloudError::BadMagic {
            path: origin.to_string(),
            found: magic,
        });
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(bytes.len(), header - bytes.len()));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| BigEndian::read_u32(&bytes[4 + 4 * i..8 + 4 * i]) as usize)
        .collect();
    let payload: usize = dims.iter().product();
    let available = bytes.len() - header;
    if available < payload {
        return Err(truncated(bytes.len(), payload - available));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..header + payload].to_vec(),
    })
}

/// Loads paired image/label IDX files as `[0, 1]` rasters with labels.
pub fn load_idx_digits(
    images: &Path,
    labels: &Path,
) -> Result<Vec<(Array2<f64>, usize)>, PointCloudError> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() != 3 {
        return Err(PointCloudError::Format {
            path: images.display().to_string(),
            message: format!("expected a rank-3 image array, got rank {}", img.dims.len()),
        });
    }
    if lab.dims.len() != 1 {
        return Err(PointCloudError::Format {
            path: labels.display().to_string(),
            message: format!("expected a rank-1 label array, got rank {}", lab.dims.len()),
        });
    }
    if img.count() != lab.count() {
        return Err(PointCloudError::CountMismatch {
            images: img.count(),
            labels: lab.count(),
        });
    }
    let (h, w) = (img.dims[1], img.dims[2]);
    Ok(img
        .data
        .chunks_exact(h * w)
        .zip(&lab.data)
        .map(|(px, &l)| {
            let raster = Array2::from_shape_fn((h, w), |(r, c)| px[r * w + c] as f64 / 255.0);
            (raster, l as usize)
        })
        .collect())
}

#[cfg(test)]
pub(crate) fn encode_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic.to_be_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
