//! Temporal k-reciprocal re-ranking.
//!
//! Every tracklet is cut into `L` temporal groups. For each `l` a separate k-reciprocal
//! Jaccard pipeline runs over query group `l` and gallery group `L-1-l`; the `L`
//! resulting matrices are summed into the cross-temporal distance, which enters the final
//! distance with weight `lambda2`.

use rayon::prelude::*;

use crate::distance::DistanceMatrix;
use crate::embedding::{split_temporal, EvalSplit, PooledEmbedding, TrackletRecord};
use crate::error::{Error, Result};
use crate::kreciprocal::{jaccard_pipeline, kreciprocal_rerank, RerankConfig};

/// Sum of reversed-pair group Jaccard distances; entries lie in `[0, groups]`.
#[derive(Debug, Clone)]
pub struct CrossTemporalMatrix {
    pub values: DistanceMatrix,
    pub groups: usize,
}

fn grouped(records: &[TrackletRecord], groups: usize) -> Result<Vec<Vec<PooledEmbedding>>> {
    let subs = records
        .par_iter()
        .map(|r| split_temporal(r, groups).map(|s| s.groups))
        .collect::<Result<Vec<_>>>()?;
    // transpose to one embedding list per group
    let mut by_group: Vec<Vec<PooledEmbedding>> =
        (0..groups).map(|_| Vec::with_capacity(subs.len())).collect();
    for sub in subs {
        for (g, e) in sub.into_iter().enumerate() {
            by_group[g].push(e);
        }
    }
    Ok(by_group)
}

pub fn cross_temporal(split: &EvalSplit, config: &RerankConfig) -> Result<CrossTemporalMatrix> {
    config.validate()?;
    let groups = config.groups;
    let shortest = split.shortest();
    if shortest.num_frames() < groups {
        return Err(Error::TooFewFrames {
            tracklet_id: shortest.tracklet_id().to_string(),
            frames: shortest.num_frames(),
            groups,
        });
    }
    let queries = grouped(split.queries(), groups)?;
    let gallery = grouped(split.gallery(), groups)?;
    let row_ids = split.query_ids();
    let col_ids = split.gallery_ids();
    let per_group = (0..groups)
        .into_par_iter()
        .map(|l| {
            jaccard_pipeline(
                &queries[l],
                &gallery[groups - 1 - l],
                config,
                row_ids.clone(),
                col_ids.clone(),
            )
            .map(|p| p.jaccard)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum = vec![0.0f64; row_ids.len() * col_ids.len()];
    for jacc in &per_group {
        for (s, v) in sum.iter_mut().zip(jacc.values()) {
            *s += v;
        }
    }
    let values = DistanceMatrix::from_parts_unchecked(row_ids.len(), col_ids.len(), sum, row_ids, col_ids);
    Ok(CrossTemporalMatrix { values, groups })
}

#[derive(Debug, Clone)]
pub struct TemporalOutput {
    pub base: DistanceMatrix,
    pub jaccard: DistanceMatrix,
    /// Absent when `lambda2 == 0`, where it cannot affect the result.
    pub cross: Option<CrossTemporalMatrix>,
    pub fused: DistanceMatrix,
}

/// `lambda1 * d_feat + (1 - lambda1) * d_jacc + lambda2 * d_cross`.
///
/// The first two terms are exactly the instance-level fusion; `lambda2 == 0` returns it
/// unchanged.
pub fn temporal_rerank(split: &EvalSplit, config: &RerankConfig) -> Result<TemporalOutput> {
    config.validate()?;
    let instance = kreciprocal_rerank(split, config)?;
    if config.lambda2 == 0.0 {
        return Ok(TemporalOutput {
            base: instance.base,
            jaccard: instance.jaccard,
            cross: None,
            fused: instance.fused,
        });
    }
    let cross = cross_temporal(split, config)?;
    let values = instance
        .fused
        .values()
        .iter()
        .zip(cross.values.values())
        .map(|(f, c)| f + config.lambda2 * c)
        .collect();
    let fused = DistanceMatrix::from_parts_unchecked(
        instance.fused.rows(),
        instance.fused.cols(),
        values,
        split.query_ids(),
        split.gallery_ids(),
    );
    Ok(TemporalOutput {
        base: instance.base,
        jaccard: instance.jaccard,
        cross: Some(cross),
        fused,
    })
}
