//! Embedding exchange format: `manifest.json` plus raw little-endian f32 blobs.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "feature_dim": 64,
//!   "direction": "VisibleToInfrared",          // optional, inferred from queries if absent
//!   "records": [
//!     { "tracklet_id": "p0000_c0_RGB", "person_id": 0, "camera_id": 0, "modality": "RGB",
//!       "role": "query", "num_frames": 10, "blob": "features.f32", "offset_bytes": 0 },
//!     ...
//!   ]
//! }
//! ```
//!
//! Blobs hold `num_frames x feature_dim` floats per record, frame-major, no header. Every
//! byte of a blob must belong to exactly the records that reference it.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{Direction, EvalSplit, Modality, TrackletRecord};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";
const BLOB_NAME: &str = "features.f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Gallery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub tracklet_id: String,
    pub person_id: i64,
    pub camera_id: u32,
    pub modality: Modality,
    pub role: Role,
    pub num_frames: usize,
    pub blob: String,
    pub offset_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub records: Vec<ManifestRecord>,
}

/// Accepts either the split directory or the manifest file itself.
fn manifest_location(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(MANIFEST_NAME), path.to_path_buf())
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path.to_path_buf(), dir)
    }
}

fn manifest_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let (manifest_path, _) = manifest_location(path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    serde_json::from_str(&text).map_err(|e| manifest_err(&manifest_path, e.to_string()))
}

fn check_blob(path: &Path, len: u64, records: &[&ManifestRecord], dim: usize) -> Result<()> {
    let row_bytes = 4 * dim as u64;
    let frames: u64 = records.iter().map(|r| r.num_frames as u64).sum();
    let end = |r: &ManifestRecord| r.offset_bytes + r.num_frames as u64 * row_bytes;
    let required = records.iter().map(|r| end(r)).max().unwrap_or(0);
    if len == required {
        return Ok(());
    }
    if frames > 0 && len.is_multiple_of(4 * frames) && len / (4 * frames) != dim as u64 {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            declared: dim,
            found: (len / (4 * frames)) as usize,
        });
    }
    if len < required {
        let r = records
            .iter()
            .find(|r| end(r) > len)
            .expect("some record overruns");
        return Err(Error::TruncatedBlob {
            path: path.to_path_buf(),
            tracklet_id: r.tracklet_id.clone(),
            needed: end(r),
            len,
        });
    }
    Err(Error::TrailingBytes {
        path: path.to_path_buf(),
        extra: len - required,
    })
}

/// Loads and validates a split from a directory (or its `manifest.json`).
pub fn load_split(path: &Path) -> Result<EvalSplit> {
    let (manifest_path, dir) = manifest_location(path);
    let manifest = read_manifest(&manifest_path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(manifest_err(
            &manifest_path,
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    let dim = manifest.feature_dim;
    if dim == 0 {
        return Err(manifest_err(&manifest_path, "feature_dim must be at least 1"));
    }
    let mut seen = HashSet::new();
    for r in &manifest.records {
        if !seen.insert(r.tracklet_id.as_str()) {
            return Err(manifest_err(
                &manifest_path,
                format!("duplicate tracklet_id {}", r.tracklet_id),
            ));
        }
        if r.num_frames == 0 {
            return Err(manifest_err(
                &manifest_path,
                format!("record {} has zero frames", r.tracklet_id),
            ));
        }
    }

    let mut by_blob: BTreeMap<&str, Vec<&ManifestRecord>> = BTreeMap::new();
    for r in &manifest.records {
        by_blob.entry(r.blob.as_str()).or_default().push(r);
    }
    let mut blobs: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for (name, records) in &by_blob {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingBlob {
                path: path.clone(),
                tracklet_id: records[0].tracklet_id.clone(),
            },
            _ => Error::io(&path, e),
        })?;
        check_blob(&path, bytes.len() as u64, records, dim)?;
        blobs.insert(name, bytes);
    }

    let mut queries = Vec::new();
    let mut gallery = Vec::new();
    for r in &manifest.records {
        let bytes = &blobs[r.blob.as_str()];
        let start = r.offset_bytes as usize;
        let raw = &bytes[start..start + r.num_frames * dim * 4];
        let frames: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        let record = TrackletRecord::new(
            r.tracklet_id.clone(),
            r.person_id,
            r.camera_id,
            r.modality,
            dim,
            frames,
        )?;
        match r.role {
            Role::Query => queries.push(record),
            Role::Gallery => gallery.push(record),
        }
    }
    let direction = match manifest.direction {
        Some(d) => d,
        None => queries
            .first()
            .map(|q| Direction::from_query_modality(q.modality()))
            .ok_or_else(|| manifest_err(&manifest_path, "split has no query records"))?,
    };
    EvalSplit::new(queries, gallery, direction)
}

/// Writes `manifest.json` and a single `features.f32` blob into `dir`, creating it.
pub fn save_split(split: &EvalSplit, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    let mut records = Vec::new();
    for (role, list) in [(Role::Query, split.queries()), (Role::Gallery, split.gallery())] {
        for r in list {
            records.push(ManifestRecord {
                tracklet_id: r.tracklet_id().to_string(),
                person_id: r.person_id(),
                camera_id: r.camera_id(),
                modality: r.modality(),
                role,
                num_frames: r.num_frames(),
                blob: BLOB_NAME.to_string(),
                offset_bytes: blob.len() as u64,
            });
            for v in r.frames() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        feature_dim: split.dim(),
        direction: Some(split.direction()),
        records,
    };
    let blob_path = dir.join(BLOB_NAME);
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Internal(format!("serializing manifest: {e}")))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))
}
