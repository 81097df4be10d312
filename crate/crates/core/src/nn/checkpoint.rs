//! Binary tensor checkpoints.
//!
//! Little-endian layout: magic `"RQCK"`, version `u16`, tensor count `u32`,
//! then per tensor: name length `u16`, UTF-8 name, rank `u8`, `rank` dims as
//! `u32`, and the row-major `f64` payload.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use ndarray::{ArrayD, IxDyn};

use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RQCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint_bytes(tensors: &[(String, ArrayD<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint(path: &Path, tensors: &[(String, ArrayD<f64>)]) -> Result<(), NnError> {
    fs::write(path, write_checkpoint_bytes(tensors)).map_err(|source| NnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, ArrayD<f64>)>, NnError> {
    let bytes = fs::read(path).map_err(|source| NnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint_bytes(&bytes, &path.display().to_string())
}

pub fn read_checkpoint_bytes(
    bytes: &[u8],
    origin: &str,
) -> Result<Vec<(String, ArrayD<f64>)>, NnError> {
    let mut r = Reader {
        bytes,
        pos: 0,
        origin,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.err("bad magic, not a checkpoint"));
    }
    let version = LittleEndian::read_u16(r.take(2)?);
    if version != CHECKPOINT_VERSION {
        return Err(r.err(&format!("unsupported checkpoint version {version}")));
    }
    let count = LittleEndian::read_u32(r.take(4)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = LittleEndian::read_u16(r.take(2)?) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.err("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let dims: Vec<usize> = (0..rank)
            .map(|_| r.take(4).map(|b| LittleEndian::read_u32(b) as usize))
            .collect::<Result<_, _>>()?;
        let len: usize = dims.iter().product();
        let data: Vec<f64> = r
            .take(len * 8)?
            .chunks_exact(8)
            .map(LittleEndian::read_f64)
            .collect();
        let t = ArrayD::from_shape_vec(IxDyn(&dims), data).expect("sized");
        out.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after last tensor"));
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(&format!("truncated at byte offset {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn err(&self, message: &str) -> NnError {
        NnError::Checkpoint {
            path: self.origin.to_string(),
            message: message.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr0, array};

    #[test]
    fn round_trip_mixed_ranks() {
        let tensors = vec![
            ("w".to_string(), array![[1.0, -2.5], [3.25, f64::MIN_POSITIVE]].into_dyn()),
            ("b".to_string(), array![0.1, 0.2, 0.3].into_dyn()),
            ("__adam/step".to_string(), arr0(12.0).into_dyn()),
        ];
        let bytes = write_checkpoint_bytes(&tensors);
        assert_eq!(&bytes[..4], b"RQCK");
        let back = read_checkpoint_bytes(&bytes, "mem").unwrap();
        assert_eq!(back, tensors);
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = write_checkpoint_bytes(&[("x".into(), array![1.0, 2.0].into_dyn())]);
        assert!(read_checkpoint_bytes(&bytes[..bytes.len() - 1], "c").is_err());
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(read_checkpoint_bytes(&bad, "c").is_err());
        let mut long = bytes;
        long.push(0);
        assert!(read_checkpoint_bytes(&long, "c").is_err());
    }
}
