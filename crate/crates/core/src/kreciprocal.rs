//! Instance-level k-reciprocal re-ranking.
//!
//! The neighbor population is the union of queries and gallery: item `i < M` is query `i`
//! and item `M + j` is gallery `j`. Nearest-neighbor lists exclude the item itself and
//! break distance ties by ascending item index.
//!
//! Expanded sets and the soft encoding work on the *closed* reciprocal set
//! `R(p, k) ∪ {p}`, the item being its own rank-0 neighbor. Each item is encoded as a
//! sparse vector over the population carrying `exp(-d(p, g))` for members of its
//! expanded set, normalized to unit sum. The Jaccard distance between two items is then
//! `1 - sum(min) / sum(max)` over their encodings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{pairwise_sq_euclidean, slices, DistanceMatrix};
use crate::embedding::{EvalSplit, PooledEmbedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub k1: usize,
    pub k2: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Number of temporal groups per tracklet.
    pub groups: usize,
    /// Use expanded reciprocal sets for the encoding (plain closed sets otherwise).
    pub expanded_sets: bool,
    /// Divide each population distance row by its maximum before the kernel and fusion.
    pub normalize_base: bool,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            k1: 5,
            k2: 3,
            lambda1: 0.8,
            lambda2: 0.1,
            groups: 2,
            expanded_sets: true,
            normalize_base: true,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "k1 and k2 must be positive (k1={}, k2={})",
                self.k1, self.k2
            )));
        }
        if self.k2 > self.k1 {
            return Err(Error::InvalidConfig(format!(
                "k2={} must not exceed k1={}",
                self.k2, self.k1
            )));
        }
        check_lambda1(self.lambda1)?;
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda2={} must be a finite non-negative number",
                self.lambda2
            )));
        }
        if self.groups == 0 {
            return Err(Error::InvalidConfig("group count L must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_lambda1(lambda1: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda1) {
        return Err(Error::InvalidConfig(format!(
            "lambda1={lambda1} must lie in [0, 1]"
        )));
    }
    Ok(())
}

/// Square distance matrix over queries ∪ gallery.
#[derive(Debug, Clone)]
pub struct Population {
    size: usize,
    num_queries: usize,
    values: Vec<f64>,
}

impl Population {
    pub fn new(queries: &[PooledEmbedding], gallery: &[PooledEmbedding]) -> Result<Self> {
        let dim = queries
            .first()
            .or(gallery.first())
            .map_or(0, PooledEmbedding::dim);
        if queries.iter().chain(gallery).any(|e| e.dim() != dim) {
            return Err(Error::InvalidInput(
                "population embeddings have differing dimensions".into(),
            ));
        }
        let mut all = slices(queries);
        all.extend(slices(gallery));
        let values = pairwise_sq_euclidean(&all, &all);
        Ok(Self {
            size: all.len(),
            num_queries: queries.len(),
            values,
        })
    }

    /// Wraps a precomputed square matrix; the first `num_queries` items are the probes.
    pub fn from_square(size: usize, num_queries: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size || num_queries > size {
            return Err(Error::InvalidInput(format!(
                "population matrix of {} values is not {size}x{size}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "population distances must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            size,
            num_queries,
            values,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_queries(&self) -> usize {
        self.num_queries
    }

    pub fn num_gallery(&self) -> usize {
        self.size - self.num_queries
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.size..(a + 1) * self.size]
    }

    /// Divisor applied to row `a` when the base is normalized.
    fn row_scale(&self, a: usize, normalize: bool) -> f64 {
        if !normalize {
            return 1.0;
        }
        let m = self.row(a).iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// The query-gallery block, optionally divided by each query's population row maximum.
    pub fn base(&self, normalize: bool, row_ids: Vec<String>, col_ids: Vec<String>) -> DistanceMatrix {
        let m = self.num_queries;
        let n = self.num_gallery();
        let mut values = Vec::with_capacity(m * n);
        for i in 0..m {
            let scale = self.row_scale(i, normalize);
            values.extend(self.row(i)[m..].iter().map(|d| d / scale));
        }
        DistanceMatrix::from_parts_unchecked(m, n, values, row_ids, col_ids)
    }
}

/// Neighbor structure of every population item.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    k: usize,
    num_queries: usize,
    knn: Vec<Vec<usize>>,
    kr: Vec<Vec<usize>>,
    kr_expanded: Vec<Vec<usize>>,
}

impl NeighborSets {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.knn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knn.is_empty()
    }

    pub fn num_queries(&self) -> usize {
        self.num_queries
    }

    /// The `k` nearest other items of `p`, nearest first.
    pub fn knn(&self, p: usize) -> &[usize] {
        &self.knn[p]
    }

    /// `R(p, k)`: members of `knn(p)` that also have `p` among their `k` nearest, in
    /// `knn(p)` order. Never contains `p`.
    pub fn kr(&self, p: usize) -> &[usize] {
        &self.kr[p]
    }

    /// Expanded closed reciprocal set, ascending item index. Always contains `p`.
    pub fn kr_expanded(&self, p: usize) -> &[usize] {
        &self.kr_expanded[p]
    }
}

fn nearest(pop: &Population, p: usize, k: usize) -> Vec<usize> {
    let row = pop.row(p);
    let mut idx: Vec<usize> = (0..pop.size()).filter(|&j| j != p).collect();
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

fn reciprocal(knn: &[Vec<usize>], p: usize, k: usize) -> Vec<usize> {
    knn[p][..k]
        .iter()
        .copied()
        .filter(|&g| knn[g][..k].contains(&p))
        .collect()
}

fn closed(mut set: Vec<usize>, p: usize) -> Vec<usize> {
    set.push(p);
    set.sort_unstable();
    set
}

fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Half-size neighborhood used by the expansion step.
pub fn expansion_k(k1: usize) -> usize {
    k1.div_ceil(2)
}

/// k-reciprocal and expanded sets for every item of the population.
///
/// A candidate `g ∈ R(p, k1)` contributes its closed set `C = R(g, ⌈k1/2⌉) ∪ {g}` when
/// `|(R(p, k1) ∪ {p}) ∩ C| >= 2/3 |C|`.
pub fn reciprocal_sets(pop: &Population, k1: usize) -> Result<NeighborSets> {
    if k1 == 0 {
        return Err(Error::InvalidConfig("k1 must be positive".into()));
    }
    if pop.size() < k1 + 1 {
        return Err(Error::InvalidConfig(format!(
            "population of {} items is smaller than k1+1={}",
            pop.size(),
            k1 + 1
        )));
    }
    let knn: Vec<Vec<usize>> = (0..pop.size())
        .into_par_iter()
        .map(|p| nearest(pop, p, k1))
        .collect();
    let half = expansion_k(k1);
    let kr: Vec<Vec<usize>> = (0..pop.size())
        .into_par_iter()
        .map(|p| reciprocal(&knn, p, k1))
        .collect();
    let half_closed: Vec<Vec<usize>> = (0..pop.size())
        .into_par_iter()
        .map(|p| closed(reciprocal(&knn, p, half), p))
        .collect();
    let kr_expanded = (0..pop.size())
        .into_par_iter()
        .map(|p| {
            let base = closed(kr[p].clone(), p);
            let mut expanded = base.clone();
            for &g in &kr[p] {
                let cand = &half_closed[g];
                if 3 * intersection_len(&base, cand) >= 2 * cand.len() {
                    expanded.extend_from_slice(cand);
                }
            }
            expanded.sort_unstable();
            expanded.dedup();
            expanded
        })
        .collect();
    Ok(NeighborSets {
        k: k1,
        num_queries: pop.num_queries(),
        knn,
        kr,
        kr_expanded,
    })
}

/// Sparse non-negative vector over population indices, ascending index.
pub type Encoding = Vec<(usize, f64)>;

/// Soft membership encoding of every item, before local query expansion.
pub fn encode(sets: &NeighborSets, pop: &Population, expanded: bool, normalize: bool) -> Vec<Encoding> {
    (0..pop.size())
        .into_par_iter()
        .map(|p| {
            let members: Vec<usize> = if expanded {
                sets.kr_expanded(p).to_vec()
            } else {
                closed(sets.kr(p).to_vec(), p)
            };
            let scale = pop.row_scale(p, normalize);
            let weights: Vec<f64> = members.iter().map(|&g| (-pop.get(p, g) / scale).exp()).collect();
            let total: f64 = weights.iter().sum();
            members
                .into_iter()
                .zip(weights)
                .map(|(g, w)| (g, w / total))
                .collect()
        })
        .collect()
}

/// Local query expansion: each encoding is replaced by the mean of its own encoding and
/// those of its `k2 - 1` nearest neighbors. `k2 = 1` leaves encodings unchanged.
pub fn local_query_expansion(sets: &NeighborSets, encodings: &[Encoding], k2: usize) -> Vec<Encoding> {
    if k2 <= 1 {
        return encodings.to_vec();
    }
    (0..encodings.len())
        .into_par_iter()
        .map(|p| {
            let mut entries: Vec<(usize, f64)> = std::iter::once(p)
                .chain(sets.knn(p)[..k2 - 1].iter().copied())
                .flat_map(|q| encodings[q].iter().copied())
                .collect();
            // stable: equal indices keep neighbor order, fixing the summation order
            entries.sort_by_key(|e| e.0);
            let mut out: Encoding = Vec::with_capacity(entries.len());
            for (g, w) in entries {
                match out.last_mut() {
                    Some(last) if last.0 == g => last.1 += w,
                    _ => out.push((g, w)),
                }
            }
            let n = k2 as f64;
            out.iter_mut().for_each(|e| e.1 /= n);
            out
        })
        .collect()
}

/// `1 - sum(min(a, b)) / sum(max(a, b))` for two sparse encodings.
pub fn soft_jaccard(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let ka = a.get(i).map_or(usize::MAX, |e| e.0);
        let kb = b.get(j).map_or(usize::MAX, |e| e.0);
        match ka.cmp(&kb) {
            std::cmp::Ordering::Less => {
                hi += a[i].1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                hi += b[j].1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                lo += a[i].1.min(b[j].1);
                hi += a[i].1.max(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    if hi > 0.0 {
        (1.0 - lo / hi).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Query-gallery Jaccard distances from precomputed neighbor sets.
pub fn jaccard_distances(
    sets: &NeighborSets,
    pop: &Population,
    config: &RerankConfig,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
) -> Result<DistanceMatrix> {
    if config.k2 == 0 || config.k2 > sets.k() {
        return Err(Error::InvalidConfig(format!(
            "k2={} must lie in [1, k1={}]",
            config.k2,
            sets.k()
        )));
    }
    if sets.len() != pop.size() || sets.num_queries() != pop.num_queries() {
        return Err(Error::InvalidInput(
            "neighbor sets were computed on a different population".into(),
        ));
    }
    let encodings = encode(sets, pop, config.expanded_sets, config.normalize_base);
    let encodings = local_query_expansion(sets, &encodings, config.k2);
    let m = pop.num_queries();
    let n = pop.num_gallery();
    let mut values = vec![0.0f64; m * n];
    if n > 0 {
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = soft_jaccard(&encodings[i], &encodings[m + j]);
            }
        });
    }
    Ok(DistanceMatrix::from_parts_unchecked(
        m, n, values, row_ids, col_ids,
    ))
}

/// `lambda1 * base + (1 - lambda1) * jacc`, element-wise.
pub fn fuse(base: &DistanceMatrix, jacc: &DistanceMatrix, lambda1: f64) -> Result<DistanceMatrix> {
    check_lambda1(lambda1)?;
    base.same_shape(jacc)?;
    let w = 1.0 - lambda1;
    let values = base
        .values()
        .iter()
        .zip(jacc.values())
        .map(|(b, j)| lambda1 * b + w * j)
        .collect();
    Ok(DistanceMatrix::from_parts_unchecked(
        base.rows(),
        base.cols(),
        values,
        base.row_ids().to_vec(),
        base.col_ids().to_vec(),
    ))
}

/// Base distance and Jaccard distance for one query/gallery embedding population.
#[derive(Debug, Clone)]
pub struct JaccardPipeline {
    pub base: DistanceMatrix,
    pub jaccard: DistanceMatrix,
}

pub fn jaccard_pipeline(
    queries: &[PooledEmbedding],
    gallery: &[PooledEmbedding],
    config: &RerankConfig,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
) -> Result<JaccardPipeline> {
    config.validate()?;
    let pop = Population::new(queries, gallery)?;
    let sets = reciprocal_sets(&pop, config.k1)?;
    let jaccard = jaccard_distances(&sets, &pop, config, row_ids.clone(), col_ids.clone())?;
    let base = pop.base(config.normalize_base, row_ids, col_ids);
    Ok(JaccardPipeline { base, jaccard })
}

/// Output of instance-level re-ranking.
#[derive(Debug, Clone)]
pub struct KReciprocalOutput {
    pub base: DistanceMatrix,
    pub jaccard: DistanceMatrix,
    pub fused: DistanceMatrix,
}

/// Instance-level k-reciprocal re-ranking of a split's pooled embeddings.
pub fn kreciprocal_rerank(split: &EvalSplit, config: &RerankConfig) -> Result<KReciprocalOutput> {
    let JaccardPipeline { base, jaccard } = jaccard_pipeline(
        &split.pooled_queries(),
        &split.pooled_gallery(),
        config,
        split.query_ids(),
        split.gallery_ids(),
    )?;
    let fused = fuse(&base, &jaccard, config.lambda1)?;
    Ok(KReciprocalOutput { base, jaccard, fused })
}
