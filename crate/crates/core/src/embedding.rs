//! Tracklet data model, temporal average pooling and temporal grouping.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "IR")]
    Ir,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "RGB",
            Modality::Ir => "IR",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Retrieval protocol: which modality the queries come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    VisibleToInfrared,
    InfraredToVisible,
}

impl Direction {
    pub fn query_modality(self) -> Modality {
        match self {
            Direction::VisibleToInfrared => Modality::Rgb,
            Direction::InfraredToVisible => Modality::Ir,
        }
    }

    pub fn gallery_modality(self) -> Modality {
        self.reversed().query_modality()
    }

    pub fn reversed(self) -> Direction {
        match self {
            Direction::VisibleToInfrared => Direction::InfraredToVisible,
            Direction::InfraredToVisible => Direction::VisibleToInfrared,
        }
    }

    pub fn from_query_modality(m: Modality) -> Direction {
        match m {
            Modality::Rgb => Direction::VisibleToInfrared,
            Modality::Ir => Direction::InfraredToVisible,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::VisibleToInfrared => "Visible to Infrared",
            Direction::InfraredToVisible => "Infrared to Visible",
        }
    }
}

/// One tracklet: a `num_frames x dim` row-major matrix of frame features plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletRecord {
    tracklet_id: String,
    person_id: i64,
    camera_id: u32,
    modality: Modality,
    num_frames: usize,
    dim: usize,
    frames: Vec<f32>,
}

impl TrackletRecord {
    pub fn new(
        tracklet_id: impl Into<String>,
        person_id: i64,
        camera_id: u32,
        modality: Modality,
        dim: usize,
        frames: Vec<f32>,
    ) -> Result<Self> {
        let tracklet_id = tracklet_id.into();
        if dim == 0 {
            return Err(Error::InvalidInput(format!(
                "record {tracklet_id}: feature dimension must be at least 1"
            )));
        }
        if frames.is_empty() {
            return Err(Error::InvalidInput(format!(
                "record {tracklet_id}: empty frame matrix"
            )));
        }
        if !frames.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "record {tracklet_id}: {} values do not form rows of width {dim}",
                frames.len()
            )));
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                tracklet_id,
                frame: pos / dim,
                column: pos % dim,
            });
        }
        Ok(Self {
            num_frames: frames.len() / dim,
            tracklet_id,
            person_id,
            camera_id,
            modality,
            dim,
            frames,
        })
    }

    /// Builds a record from a list of frame rows.
    pub fn from_rows(
        tracklet_id: impl Into<String>,
        person_id: i64,
        camera_id: u32,
        modality: Modality,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let tracklet_id = tracklet_id.into();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "record {tracklet_id}: ragged frame rows"
            )));
        }
        let frames = rows.iter().flatten().copied().collect();
        Self::new(tracklet_id, person_id, camera_id, modality, dim, frames)
    }

    pub fn tracklet_id(&self) -> &str {
        &self.tracklet_id
    }

    pub fn person_id(&self) -> i64 {
        self.person_id
    }

    pub fn camera_id(&self) -> u32 {
        self.camera_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major frame features.
    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }
}

/// Temporally pooled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding(Vec<f64>);

impl PooledEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite embedding entry".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-group pooled embeddings of one tracklet, in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrackletEmbeddings {
    pub groups: Vec<PooledEmbedding>,
    /// Zero-based, half-open frame ranges; together they cover `0..num_frames` in order.
    pub group_bounds: Vec<Range<usize>>,
}

fn pool_range(record: &TrackletRecord, frames: Range<usize>) -> PooledEmbedding {
    let dim = record.dim();
    let mut acc = vec![0.0f64; dim];
    for t in frames.clone() {
        for (a, &v) in acc.iter_mut().zip(record.frame(t)) {
            *a += f64::from(v);
        }
    }
    let n = frames.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    PooledEmbedding(acc)
}

/// Temporal average pooling over all frames, accumulated in f64.
pub fn temporal_pool(record: &TrackletRecord) -> Result<PooledEmbedding> {
    if record.num_frames() == 0 {
        return Err(Error::InvalidInput(format!(
            "record {}: empty frame matrix",
            record.tracklet_id()
        )));
    }
    Ok(pool_range(record, 0..record.num_frames()))
}

/// Contiguous partition of `0..num_frames` into `groups` ranges whose sizes differ by at
/// most one; the earliest groups take the remainder.
pub fn group_bounds(num_frames: usize, groups: usize) -> Result<Vec<Range<usize>>> {
    if groups == 0 || groups > num_frames {
        return Err(Error::InvalidConfig(format!(
            "group count L={groups} must satisfy 1 <= L <= T={num_frames}"
        )));
    }
    let base = num_frames / groups;
    let extra = num_frames % groups;
    let mut start = 0;
    Ok((0..groups)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Splits a tracklet into `groups` temporal groups and average-pools each.
pub fn split_temporal(record: &TrackletRecord, groups: usize) -> Result<SubTrackletEmbeddings> {
    let bounds = group_bounds(record.num_frames(), groups)?;
    let pooled = bounds.iter().map(|r| pool_range(record, r.clone())).collect();
    Ok(SubTrackletEmbeddings {
        groups: pooled,
        group_bounds: bounds,
    })
}

/// Query and gallery tracklets under one retrieval direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSplit {
    queries: Vec<TrackletRecord>,
    gallery: Vec<TrackletRecord>,
    direction: Direction,
}

impl EvalSplit {
    pub fn new(
        queries: Vec<TrackletRecord>,
        gallery: Vec<TrackletRecord>,
        direction: Direction,
    ) -> Result<Self> {
        if queries.is_empty() || gallery.is_empty() {
            return Err(Error::InvalidInput(format!(
                "split needs at least one query and one gallery record (got {} and {})",
                queries.len(),
                gallery.len()
            )));
        }
        let dim = queries[0].dim();
        for (role, records, want) in [
            ("query", &queries, direction.query_modality()),
            ("gallery", &gallery, direction.gallery_modality()),
        ] {
            for r in records {
                if r.dim() != dim {
                    return Err(Error::InvalidInput(format!(
                        "record {} has D={}, split uses D={dim}",
                        r.tracklet_id(),
                        r.dim()
                    )));
                }
                if r.modality() != want {
                    return Err(Error::ModalityViolation(format!(
                        "{role} record {} is {} but direction {:?} requires {want}",
                        r.tracklet_id(),
                        r.modality(),
                        direction
                    )));
                }
            }
        }
        Ok(Self {
            queries,
            gallery,
            direction,
        })
    }

    pub fn queries(&self) -> &[TrackletRecord] {
        &self.queries
    }

    pub fn gallery(&self) -> &[TrackletRecord] {
        &self.gallery
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn dim(&self) -> usize {
        self.queries[0].dim()
    }

    /// The same tracklets with query and gallery roles swapped.
    pub fn reversed(&self) -> EvalSplit {
        EvalSplit {
            queries: self.gallery.clone(),
            gallery: self.queries.clone(),
            direction: self.direction.reversed(),
        }
    }

    pub fn pooled_queries(&self) -> Vec<PooledEmbedding> {
        self.queries
            .iter()
            .map(|r| pool_range(r, 0..r.num_frames()))
            .collect()
    }

    pub fn pooled_gallery(&self) -> Vec<PooledEmbedding> {
        self.gallery
            .iter()
            .map(|r| pool_range(r, 0..r.num_frames()))
            .collect()
    }

    pub fn query_ids(&self) -> Vec<String> {
        self.queries.iter().map(|r| r.tracklet_id.clone()).collect()
    }

    pub fn gallery_ids(&self) -> Vec<String> {
        self.gallery.iter().map(|r| r.tracklet_id.clone()).collect()
    }

    /// Smallest tracklet length across the split, with the offending tracklet.
    pub fn shortest(&self) -> &TrackletRecord {
        self.queries
            .iter()
            .chain(&self.gallery)
            .min_by_key(|r| r.num_frames())
            .expect("split is non-empty")
    }
}
