//! Reference implementations used only by tests. They share no code with the library's
//! distance, neighbor, encoding or scoring paths: every set is materialized explicitly and
//! every distance is the direct difference form.

#![allow(dead_code, clippy::needless_range_loop, clippy::manual_div_ceil)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use reid_rerank::{Direction, EvalSplit, Modality, TrackletRecord};

pub fn direct_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

/// Column means over frames `range` of a row-major `frames x dim` matrix.
pub fn scalar_mean(frames: &[f32], dim: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for c in 0..dim {
        let mut s = 0.0f64;
        for t in range.clone() {
            s += frames[t * dim + c] as f64;
        }
        out[c] = s / range.len() as f64;
    }
    out
}

/// Explicit group partition: sizes `ceil` for the first `T mod L` groups, `floor` after.
pub fn explicit_partition(t: usize, l: usize) -> Vec<std::ops::Range<usize>> {
    let mut sizes = vec![t / l; l];
    for s in sizes.iter_mut().take(t % l) {
        *s += 1;
    }
    let mut out = Vec::new();
    let mut at = 0;
    for s in sizes {
        out.push(at..at + s);
        at += s;
    }
    out
}

pub struct OracleResult {
    pub base: Vec<Vec<f64>>,
    pub jaccard: Vec<Vec<f64>>,
    pub kr: Vec<BTreeSet<usize>>,
    pub knn: Vec<Vec<usize>>,
}

/// Materialized-set k-reciprocal Jaccard pipeline over `queries ∪ gallery`.
pub fn oracle_jaccard(
    queries: &[Vec<f64>],
    gallery: &[Vec<f64>],
    k1: usize,
    k2: usize,
    expanded: bool,
    normalize: bool,
) -> OracleResult {
    let items: Vec<&Vec<f64>> = queries.iter().chain(gallery).collect();
    let p = items.len();
    let m = queries.len();
    let dist: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| direct_sq(items[a], items[b])).collect())
        .collect();

    let order: Vec<Vec<usize>> = (0..p)
        .map(|a| {
            let mut o: Vec<usize> = (0..p).filter(|&b| b != a).collect();
            o.sort_by(|&x, &y| dist[a][x].partial_cmp(&dist[a][y]).unwrap().then(x.cmp(&y)));
            o
        })
        .collect();
    let nn = |a: usize, k: usize| -> BTreeSet<usize> { order[a][..k].iter().copied().collect() };
    let recip = |a: usize, k: usize| -> BTreeSet<usize> {
        let na = nn(a, k);
        (0..p)
            .filter(|&b| na.contains(&b) && nn(b, k).contains(&a))
            .collect()
    };
    let closed = |a: usize, k: usize| -> BTreeSet<usize> {
        let mut s = recip(a, k);
        s.insert(a);
        s
    };
    let half = (k1 + 1) / 2;

    let mut kr = Vec::new();
    let mut weights: Vec<BTreeMap<usize, f64>> = Vec::new();
    for a in 0..p {
        let r = recip(a, k1);
        let rc = closed(a, k1);
        let mut set = rc.clone();
        if expanded {
            for &g in &r {
                let c = closed(g, half);
                let overlap = rc.intersection(&c).count();
                if overlap as f64 >= 2.0 / 3.0 * c.len() as f64 {
                    set.extend(c);
                }
            }
        }
        let scale = if normalize {
            let mx = dist[a].iter().cloned().fold(0.0, f64::max);
            if mx > 0.0 {
                mx
            } else {
                1.0
            }
        } else {
            1.0
        };
        let raw: BTreeMap<usize, f64> = set.iter().map(|&g| (g, (-dist[a][g] / scale).exp())).collect();
        let total: f64 = raw.values().sum();
        weights.push(raw.into_iter().map(|(g, w)| (g, w / total)).collect());
        kr.push(r);
    }

    let expanded_w: Vec<BTreeMap<usize, f64>> = (0..p)
        .map(|a| {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            let members: Vec<usize> = std::iter::once(a)
                .chain(order[a][..k2 - 1].iter().copied())
                .collect();
            for c in &members {
                for (&g, &w) in &weights[*c] {
                    *acc.entry(g).or_insert(0.0) += w;
                }
            }
            acc.into_iter().map(|(g, w)| (g, w / k2 as f64)).collect()
        })
        .collect();

    let jaccard = (0..m)
        .map(|i| {
            (0..gallery.len())
                .map(|j| {
                    let a = &expanded_w[i];
                    let b = &expanded_w[m + j];
                    let keys: BTreeSet<usize> = a.keys().chain(b.keys()).copied().collect();
                    let (mut lo, mut hi) = (0.0, 0.0);
                    for k in keys {
                        let x = a.get(&k).copied().unwrap_or(0.0);
                        let y = b.get(&k).copied().unwrap_or(0.0);
                        lo += x.min(y);
                        hi += x.max(y);
                    }
                    1.0 - lo / hi
                })
                .collect()
        })
        .collect();

    let base = (0..m)
        .map(|i| {
            let scale = if normalize {
                let mx = dist[i].iter().cloned().fold(0.0, f64::max);
                if mx > 0.0 {
                    mx
                } else {
                    1.0
                }
            } else {
                1.0
            };
            (0..gallery.len()).map(|j| dist[i][m + j] / scale).collect()
        })
        .collect();

    OracleResult {
        base,
        jaccard,
        kr,
        knn: order.iter().map(|o| o[..k1].to_vec()).collect(),
    }
}

/// Per-group-pair oracle for the cross-temporal term.
pub fn oracle_cross(split: &EvalSplit, k1: usize, k2: usize, groups: usize) -> Vec<Vec<f64>> {
    let sub = |r: &TrackletRecord, g: usize| {
        let parts = explicit_partition(r.num_frames(), groups);
        scalar_mean(r.frames(), r.dim(), parts[g].clone())
    };
    let m = split.queries().len();
    let n = split.gallery().len();
    let mut sum = vec![vec![0.0; n]; m];
    for l in 0..groups {
        let q: Vec<Vec<f64>> = split.queries().iter().map(|r| sub(r, l)).collect();
        let g: Vec<Vec<f64>> = split.gallery().iter().map(|r| sub(r, groups - 1 - l)).collect();
        let res = oracle_jaccard(&q, &g, k1, k2, true, true);
        for i in 0..m {
            for j in 0..n {
                sum[i][j] += res.jaccard[i][j];
            }
        }
    }
    sum
}

pub fn pooled(split: &EvalSplit) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let pool = |r: &TrackletRecord| scalar_mean(r.frames(), r.dim(), 0..r.num_frames());
    (
        split.queries().iter().map(pool).collect(),
        split.gallery().iter().map(pool).collect(),
    )
}

/// Random split with `ids` identities; points optionally clustered by identity.
pub fn random_split(
    rng: &mut StdRng,
    m: usize,
    n: usize,
    dim: usize,
    frames: usize,
    clustered: bool,
) -> EvalSplit {
    let ids = (m.max(n) / 2).max(1);
    let centers: Vec<Vec<f64>> = (0..ids)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut make = |i: usize, modality: Modality| {
        let pid = rng.random_range(0..ids);
        let rows: Vec<Vec<f32>> = (0..frames)
            .map(|_| {
                (0..dim)
                    .map(|d| {
                        let c = if clustered { centers[pid][d] } else { 0.0 };
                        (c + rng.random_range(-0.6..0.6)) as f32
                    })
                    .collect()
            })
            .collect();
        TrackletRecord::from_rows(
            format!("{modality}{i}"),
            pid as i64,
            (i % 3) as u32,
            modality,
            &rows,
        )
        .unwrap()
    };
    let q = (0..m).map(|i| make(i, Modality::Rgb)).collect();
    let g = (0..n).map(|i| make(i, Modality::Ir)).collect();
    EvalSplit::new(q, g, Direction::VisibleToInfrared).unwrap()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = b.iter().flatten().copied().collect();
    assert_eq!(a.len(), flat.len());
    a.iter()
        .zip(&flat)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
