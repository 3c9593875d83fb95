//! Dense squared-Euclidean distance matrices.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EvalSplit, PooledEmbedding};
use crate::error::{Error, Result};

/// Row-major `rows x cols` matrix of non-negative dissimilarities.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

impl DistanceMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        row_ids: Vec<String>,
        col_ids: Vec<String>,
    ) -> Result<Self> {
        if values.len() != rows * cols || row_ids.len() != rows || col_ids.len() != cols {
            return Err(Error::InvalidInput(format!(
                "distance matrix {rows}x{cols} got {} values, {} row ids, {} col ids",
                values.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "distance entry ({}, {}) = {} is negative or non-finite",
                pos / cols,
                pos % cols,
                values[pos]
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            row_ids,
            col_ids,
        })
    }

    pub(crate) fn from_parts_unchecked(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        row_ids: Vec<String>,
        col_ids: Vec<String>,
    ) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values,
            row_ids,
            col_ids,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn transpose(&self) -> DistanceMatrix {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        Self::from_parts_unchecked(
            self.cols,
            self.rows,
            values,
            self.col_ids.clone(),
            self.row_ids.clone(),
        )
    }

    /// Plain Euclidean view (element-wise square root). Ranking-equivalent.
    pub fn unsquared(&self) -> DistanceMatrix {
        let values = self.values.iter().map(|v| v.sqrt()).collect();
        Self::from_parts_unchecked(
            self.rows,
            self.cols,
            values,
            self.row_ids.clone(),
            self.col_ids.clone(),
        )
    }

    /// Columns of row `i` ordered by ascending distance, ties by column index.
    pub fn argsort_row(&self, i: usize) -> Vec<usize> {
        let row = self.row(i);
        let mut idx: Vec<usize> = (0..self.cols).collect();
        idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        idx
    }

    pub(crate) fn same_shape(&self, other: &DistanceMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected_rows: self.rows,
                expected_cols: self.cols,
                rows: other.rows,
                cols: other.cols,
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Squared Euclidean distances between every row of `a` and every row of `b`,
/// via the expanded form `|a|^2 + |b|^2 - 2 a.b`, clamped at zero.
pub fn pairwise_sq_euclidean(a: &[&[f64]], b: &[&[f64]]) -> Vec<f64> {
    let na: Vec<f64> = a.par_iter().map(|x| dot(x, x)).collect();
    let nb: Vec<f64> = b.par_iter().map(|x| dot(x, x)).collect();
    let cols = b.len();
    let mut out = vec![0.0f64; a.len() * cols];
    if cols == 0 {
        return out;
    }
    out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        let x = a[i];
        for (j, slot) in row.iter_mut().enumerate() {
            let d = na[i] + nb[j] - 2.0 * dot(x, b[j]);
            *slot = d.max(0.0);
        }
    });
    out
}

pub(crate) fn slices(embs: &[PooledEmbedding]) -> Vec<&[f64]> {
    embs.iter().map(PooledEmbedding::as_slice).collect()
}

/// Distances between explicit query and gallery embeddings.
pub fn distances_between(
    queries: &[PooledEmbedding],
    gallery: &[PooledEmbedding],
    row_ids: Vec<String>,
    col_ids: Vec<String>,
) -> Result<DistanceMatrix> {
    let dim = queries.first().map(PooledEmbedding::dim).unwrap_or(0);
    if let Some(bad) = queries.iter().chain(gallery).find(|e| e.dim() != dim) {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {} differs from {dim}",
            bad.dim()
        )));
    }
    let values = pairwise_sq_euclidean(&slices(queries), &slices(gallery));
    DistanceMatrix::new(queries.len(), gallery.len(), values, row_ids, col_ids)
}

/// Squared Euclidean distance between pooled query and gallery embeddings.
pub fn feature_distances(split: &EvalSplit) -> Result<DistanceMatrix> {
    distances_between(
        &split.pooled_queries(),
        &split.pooled_gallery(),
        split.query_ids(),
        split.gallery_ids(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpShape {
    rows: usize,
    cols: usize,
    dtype: String,
    order: String,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
}

fn sidecar(prefix: &Path) -> (PathBuf, PathBuf) {
    let mut bin = prefix.as_os_str().to_owned();
    bin.push(".bin");
    let mut json = prefix.as_os_str().to_owned();
    json.push(".json");
    (PathBuf::from(bin), PathBuf::from(json))
}

/// Writes `<prefix>.bin` (little-endian f64, row-major) and `<prefix>.json` (shape).
pub fn write_dump(matrix: &DistanceMatrix, prefix: &Path) -> Result<()> {
    let (bin, json) = sidecar(prefix);
    let mut bytes = Vec::with_capacity(matrix.values.len() * 8);
    for v in &matrix.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let shape = DumpShape {
        rows: matrix.rows,
        cols: matrix.cols,
        dtype: "f64le".into(),
        order: "row-major".into(),
        row_ids: matrix.row_ids.clone(),
        col_ids: matrix.col_ids.clone(),
    };
    let text = serde_json::to_string_pretty(&shape)
        .map_err(|e| Error::Internal(format!("serializing dump shape: {e}")))?;
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
}

pub fn read_dump(prefix: &Path) -> Result<DistanceMatrix> {
    let (bin, json) = sidecar(prefix);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let shape: DumpShape = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: json.clone(),
        message: e.to_string(),
    })?;
    if shape.dtype != "f64le" {
        return Err(Error::Manifest {
            path: json,
            message: format!("unsupported dtype {}", shape.dtype),
        });
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected = shape.rows * shape.cols * 8;
    if bytes.len() != expected {
        return Err(Error::Manifest {
            path: bin,
            message: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DistanceMatrix::new(shape.rows, shape.cols, values, shape.row_ids, shape.col_ids)
}
