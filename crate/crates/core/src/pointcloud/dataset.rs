//! Native binary dataset files and the manifest that describes a dataset.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic        4 bytes  "RQPC"
//! version      u16
//! records      u32
//! points       u32      points per cloud
//! spatial_dim  u8       2 or 3
//! flags        u8       bit0 normals, bit1 intensity
//! classes      u16
//! per record:  label u16, coords f32[points*dim], normals f32[points*dim]?,
//!              intensity f32[points]?
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{PointCloud, PointCloudError};

pub const DATASET_MAGIC: &[u8; 4] = b"RQPC";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 1 + 1 + 2;

/// Which per-point channels a dataset carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub spatial_dim: usize,
    pub normals: bool,
    pub intensity: bool,
}

impl ChannelLayout {
    fn flags(&self) -> u8 {
        (self.normals as u8) | ((self.intensity as u8) << 1)
    }

    /// Width of the network input row: coordinates, normals, intensity.
    pub fn feature_width(&self, use_normals: bool) -> usize {
        self.spatial_dim
            + if use_normals && self.normals {
                self.spatial_dim
            } else {
                0
            }
            + self.intensity as usize
    }
}

impl fmt::Display for ChannelLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.spatial_dim == 2 { "xy" } else { "xyz" })?;
        if self.normals {
            f.write_str("+normals")?;
        }
        if self.intensity {
            f.write_str("+intensity")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u16,
    pub records: usize,
    pub points: usize,
    pub layout: ChannelLayout,
    pub classes: usize,
}

pub fn write_dataset_bytes(
    records: &[PointCloud],
    classes: usize,
) -> Result<Vec<u8>, PointCloudError> {
    let first = records
        .first()
        .ok_or_else(|| PointCloudError::InvalidArgument("no records to write".into()))?;
    let layout = first.layout();
    let points = first.len();
    if classes > u16::MAX as usize {
        return Err(PointCloudError::InvalidArgument(format!(
            "{classes} classes exceed the u16 class field"
        )));
    }
    let d = layout.spatial_dim;
    let per_record =
        2 + 4 * points * (d + if layout.normals { d } else { 0 } + layout.intensity as usize);
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * per_record);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    out.extend_from_slice(&(points as u32).to_le_bytes());
    out.push(d as u8);
    out.push(layout.flags());
    out.extend_from_slice(&(classes as u16).to_le_bytes());
    for (i, pc) in records.iter().enumerate() {
        if pc.layout() != layout || pc.len() != points {
            return Err(PointCloudError::InvalidArgument(format!(
                "record {i} has layout {} with {} points, expected {layout} with {points}",
                pc.layout(),
                pc.len()
            )));
        }
        if pc.label >= classes {
            return Err(PointCloudError::InvalidArgument(format!(
                "record {i} has label {} but only {classes} classes",
                pc.label
            )));
        }
        out.extend_from_slice(&(pc.label as u16).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        pc.coords.iter().for_each(|&v| put(v));
        if let Some(n) = &pc.normals {
            n.iter().for_each(|&v| put(v));
        }
        if let Some(it) = &pc.intensity {
            it.iter().for_each(|&v| put(v));
        }
    }
    Ok(out)
}

pub fn write_dataset(
    path: &Path,
    records: &[PointCloud],
    classes: usize,
) -> Result<(), PointCloudError> {
    let bytes = write_dataset_bytes(records, classes)?;
    fs::write(path, bytes).map_err(|e| PointCloudError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<PointCloud>), PointCloudError> {
    let bytes = fs::read(path).map_err(|e| PointCloudError::io(path, e))?;
    read_dataset_bytes(&bytes, &path.display().to_string())
}

pub fn read_dataset_bytes(
    bytes: &[u8],
    origin: &str,
) -> Result<(DatasetHeader, Vec<PointCloud>), PointCloudError> {
    let format_err = |message: String| PointCloudError::Format {
        path: origin.to_string(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(PointCloudError::Truncated {
            path: origin.to_string(),
            offset: bytes.len(),
            needed: HEADER_LEN - bytes.len(),
        });
    }
    if &bytes[0..4] != DATASET_MAGIC {
        return Err(PointCloudError::BadMagic {
            path: origin.to_string(),
            found: u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        });
    }
    let version = LittleEndian::read_u16(&bytes[4..6]);
    if version != DATASET_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let count = LittleEndian::read_u32(&bytes[6..10]) as usize;
    let points = LittleEndian::read_u32(&bytes[10..14]) as usize;
    let dim = bytes[14] as usize;
    let flags = bytes[15];
    let classes = LittleEndian::read_u16(&bytes[16..18]) as usize;
    if !(dim == 2 || dim == 3) {
        return Err(format_err(format!("spatial dimension {dim} is not 2 or 3")));
    }
    if flags & !0b11 != 0 {
        return Err(format_err(format!("unknown flag bits {flags:#04x}")));
    }
    if points == 0 {
        return Err(format_err("zero points per cloud".into()));
    }
    let layout = ChannelLayout {
        spatial_dim: dim,
        normals: flags & 1 != 0,
        intensity: flags & 2 != 0,
    };
    let floats = points * (dim + if layout.normals { dim } else { 0 } + layout.intensity as usize);
    let record_len = 2 + 4 * floats;
    let needed = HEADER_LEN + count * record_len;
    if bytes.len() < needed {
        return Err(PointCloudError::Truncated {
            path: origin.to_string(),
            offset: bytes.len(),
            needed: needed - bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(format_err(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - needed
        )));
    }

    let mut records = Vec::with_capacity(count);
    let mut pos = HEADER_LEN;
    for i in 0..count {
        let label = LittleEndian::read_u16(&bytes[pos..pos + 2]) as usize;
        pos += 2;
        if label >= classes {
            return Err(format_err(format!(
                "record {i} label {label} out of range for {classes} classes"
            )));
        }
        let mut take = |n: usize| {
            let v: Vec<f64> = bytes[pos..pos + 4 * n]
                .chunks_exact(4)
                .map(|c| LittleEndian::read_f32(c) as f64)
                .collect();
            pos += 4 * n;
            v
        };
        let coords = Array2::from_shape_vec((points, dim), take(points * dim)).expect("sized");
        let normals = layout
            .normals
            .then(|| Array2::from_shape_vec((points, dim), take(points * dim)).expect("sized"));
        let intensity = layout.intensity.then(|| Array1::from(take(points)));
        let pc = PointCloud {
            coords,
            normals,
            intensity,
            label,
        };
        pc.validate()
            .map_err(|e| format_err(format!("record {i}: {e}")))?;
        records.push(pc);
    }
    Ok((
        DatasetHeader {
            version,
            records: count,
            points,
            layout,
            classes,
        },
        records,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub path: PathBuf,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: SplitEntry,
    pub val: SplitEntry,
    pub test: SplitEntry,
}

/// On-disk dataset description, stored as TOML next to the split files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub format: String,
    /// Directory holding the split files; relative paths resolve against the
    /// manifest's own directory.
    pub root: PathBuf,
    pub class_names: Vec<String>,
    pub points_per_cloud: usize,
    pub channels: ChannelLayout,
    pub splits: Splits,
    #[serde(skip)]
    base_dir: PathBuf,
}

pub const MANIFEST_FORMAT: &str = "rqpc-v1";

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        class_names: Vec<String>,
        points_per_cloud: usize,
        channels: ChannelLayout,
        splits: Splits,
    ) -> Self {
        Self {
            name: name.into(),
            format: MANIFEST_FORMAT.into(),
            root: PathBuf::from("."),
            class_names,
            points_per_cloud,
            channels,
            splits,
            base_dir: PathBuf::new(),
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<(), PointCloudError> {
        let bad = |m: String| PointCloudError::InvalidArgument(m);
        if self.format != MANIFEST_FORMAT {
            return Err(bad(format!("unsupported dataset format `{}`", self.format)));
        }
        if self.class_names.is_empty() {
            return Err(bad("manifest lists no classes".into()));
        }
        for (name, s) in self.split_entries() {
            if s.size == 0 {
                return Err(bad(format!("split `{name}` is empty")));
            }
        }
        if self.points_per_cloud == 0 {
            return Err(bad("points_per_cloud must be positive".into()));
        }
        Ok(())
    }

    pub fn split_entries(&self) -> [(&'static str, &SplitEntry); 3] {
        [
            ("train", &self.splits.train),
            ("val", &self.splits.val),
            ("test", &self.splits.test),
        ]
    }

    pub fn load(path: &Path) -> Result<Self, PointCloudError> {
        let text = fs::read_to_string(path).map_err(|e| PointCloudError::io(path, e))?;
        let mut m: DatasetManifest = toml::from_str(&text).map_err(|e| PointCloudError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), PointCloudError> {
        let text = toml::to_string(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| PointCloudError::io(path, e))
    }

    pub fn split_path(&self, split: &str) -> Result<PathBuf, PointCloudError> {
        let entry = self
            .split_entries()
            .into_iter()
            .find(|(n, _)| *n == split)
            .map(|(_, e)| e)
            .ok_or_else(|| PointCloudError::InvalidArgument(format!("unknown split `{split}`")))?;
        Ok(self.base_dir.join(&self.root).join(&entry.path))
    }

    /// Reads one split and checks it against the manifest.
    pub fn read_split(&self, split: &str) -> Result<Vec<PointCloud>, PointCloudError> {
        let path = self.split_path(split)?;
        let (header, records) = read_dataset(&path)?;
        let expected_size = self
            .split_entries()
            .into_iter()
            .find(|(n, _)| *n == split)
            .map(|(_, e)| e.size)
            .unwrap_or(0);
        let mismatch = |message: String| PointCloudError::Format {
            path: path.display().to_string(),
            message,
        };
        if header.records != expected_size {
            return Err(mismatch(format!(
                "{} records, manifest says {expected_size}",
                header.records
            )));
        }
        if header.layout != self.channels {
            return Err(mismatch(format!(
                "channel layout {}, manifest says {}",
                header.layout, self.channels
            )));
        }
        if header.points != self.points_per_cloud {
            return Err(mismatch(format!(
                "{} points per cloud, manifest says {}",
                header.points, self.points_per_cloud
            )));
        }
        if header.classes != self.class_count() {
            return Err(mismatch(format!(
                "{} classes, manifest says {}",
                header.classes,
                self.class_count()
            )));
        }
        Ok(records)
    }
}
