//! CMC and mAP scoring of a query-gallery distance matrix.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::embedding::{Direction, EvalSplit};
use crate::error::{Error, Result};
use crate::kreciprocal::RerankConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RerankMode {
    None,
    KReciprocal,
    TemporalKReciprocal,
}

/// The re-ranking setup that produced the evaluated distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: RerankMode,
    pub rerank: Option<RerankConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub direction: Direction,
    /// `cmc[n - 1]` is the fraction of valid queries matched within the first `n` ranks.
    pub cmc: Vec<f64>,
    pub map: f64,
    /// `None` for queries without a valid positive.
    pub per_query_ap: Vec<Option<f64>>,
    pub num_queries: usize,
    pub skipped_queries: usize,
    pub exclude_same_camera: bool,
    pub config_echo: Option<ConfigEcho>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing_ms: Option<BTreeMap<String, f64>>,
}

impl EvalReport {
    /// CMC at 1-based rank `n`, saturating at the gallery size.
    pub fn rank(&self, n: usize) -> f64 {
        let n = n.clamp(1, self.cmc.len());
        self.cmc[n - 1]
    }
}

struct QueryScore {
    ap: f64,
    first_hit: usize,
}

/// AP and first-hit rank of one query, or `None` if it has no valid positive.
fn score_query(row: &[f64], positive: &[bool], keep: &[bool]) -> Option<QueryScore> {
    let mut order: Vec<usize> = (0..row.len()).filter(|&j| keep[j]).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    let mut first_hit = None;
    for (rank, &j) in order.iter().enumerate() {
        if positive[j] {
            hits += 1;
            precision_sum += hits as f64 / (rank + 1) as f64;
            first_hit.get_or_insert(rank);
        }
    }
    first_hit.map(|first_hit| QueryScore {
        ap: precision_sum / hits as f64,
        first_hit,
    })
}

/// Scores `dist` against the identity labels of `split`.
///
/// Galleries are ranked ascending by distance with ties broken by gallery index. With
/// `exclude_same_camera`, gallery entries sharing both identity and camera with the query
/// are dropped from its ranking.
pub fn evaluate(dist: &DistanceMatrix, split: &EvalSplit, exclude_same_camera: bool) -> Result<EvalReport> {
    let m = split.queries().len();
    let n = split.gallery().len();
    if dist.shape() != (m, n) {
        return Err(Error::ShapeMismatch {
            expected_rows: m,
            expected_cols: n,
            rows: dist.rows(),
            cols: dist.cols(),
        });
    }
    let scores: Vec<Option<QueryScore>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let q = &split.queries()[i];
            let positive: Vec<bool> = split
                .gallery()
                .iter()
                .map(|g| g.person_id() == q.person_id())
                .collect();
            let keep: Vec<bool> = split
                .gallery()
                .iter()
                .zip(&positive)
                .map(|(g, &pos)| !(exclude_same_camera && pos && g.camera_id() == q.camera_id()))
                .collect();
            score_query(dist.row(i), &positive, &keep)
        })
        .collect();

    let valid = scores.iter().flatten().count();
    if valid == 0 {
        return Err(Error::EmptyEvaluation { skipped: m });
    }
    let mut first_hits = vec![0usize; n];
    for s in scores.iter().flatten() {
        first_hits[s.first_hit] += 1;
    }
    let mut cmc = Vec::with_capacity(n);
    let mut running = 0usize;
    for count in first_hits {
        running += count;
        cmc.push(running as f64 / valid as f64);
    }
    let per_query_ap: Vec<Option<f64>> = scores.iter().map(|s| s.as_ref().map(|s| s.ap)).collect();
    let map = per_query_ap.iter().flatten().sum::<f64>() / valid as f64;
    Ok(EvalReport {
        direction: split.direction(),
        cmc,
        map,
        per_query_ap,
        num_queries: m,
        skipped_queries: m - valid,
        exclude_same_camera,
        config_echo: None,
        timing_ms: None,
    })
}
