//! Exhaustive Hamming search over packed codes and retrieval metrics.
//!
//! For ±1 codes the Hamming distance and cosine similarity are tied by
//! `D = K/2 · (1 − cos)`, so ranking by popcount distance is ranking by code
//! similarity. Rankings break distance ties by ascending gallery index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Labels;
use crate::error::{Error, Result};
use crate::hash_model::{tail_mask, PackedCodes};

/// Popcount of XOR over code words, ignoring bits past `k_bits`.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64], k_bits: usize) -> u32 {
    let last = a.len().saturating_sub(1);
    let mask = tail_mask(k_bits);
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(w, (&x, &y))| {
            let diff = x ^ y;
            (if w == last { diff & mask } else { diff }).count_ones()
        })
        .sum()
}

/// Distance between row `i` of `a` and row `j` of `b`.
pub fn hamming_distance(a: &PackedCodes, i: usize, b: &PackedCodes, j: usize) -> Result<u32> {
    if a.k_bits() != b.k_bits() {
        return Err(Error::shape("hamming_distance", a.k_bits(), b.k_bits()));
    }
    Ok(hamming_words(a.row(i), b.row(j), a.k_bits()))
}

/// Cosine similarity of two ±1 codes given their Hamming distance.
#[inline]
pub fn code_similarity(distance: u32, k_bits: usize) -> f64 {
    // one rounding: lands exactly on the lattice value (K − 2d)/K
    (k_bits as f64 - 2.0 * distance as f64) / k_bits as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_index: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<u32>,
}

fn check_compatible(queries: &PackedCodes, gallery: &PackedCodes) -> Result<()> {
    if queries.k_bits() != gallery.k_bits() {
        return Err(Error::shape("retrieval", queries.k_bits(), gallery.k_bits()));
    }
    if gallery.is_empty() {
        return Err(Error::Empty("gallery"));
    }
    Ok(())
}

/// Full ranking of the gallery for one query by counting sort on distance.
/// `skip` removes one gallery index from the ranking.
fn rank_gallery(query: &[u64], gallery: &PackedCodes, skip: Option<usize>) -> (Vec<usize>, Vec<u32>) {
    let k = gallery.k_bits();
    let dists: Vec<u32> = (0..gallery.len())
        .map(|j| hamming_words(query, gallery.row(j), k))
        .collect();
    let mut starts = vec![0usize; k + 2];
    for (j, &d) in dists.iter().enumerate() {
        if Some(j) != skip {
            starts[d as usize + 1] += 1;
        }
    }
    for b in 1..starts.len() {
        starts[b] += starts[b - 1];
    }
    let total = starts[k + 1];
    let mut order = vec![0usize; total];
    for (j, &d) in dists.iter().enumerate() {
        if Some(j) != skip {
            order[starts[d as usize]] = j;
            starts[d as usize] += 1;
        }
    }
    let sorted = order.iter().map(|&j| dists[j]).collect();
    (order, sorted)
}

/// The `k` nearest gallery codes for every query, exact.
pub fn search_topk(queries: &PackedCodes, gallery: &PackedCodes, k: usize) -> Result<Vec<RetrievalResult>> {
    check_compatible(queries, gallery)?;
    if k == 0 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    Ok((0..queries.len())
        .into_par_iter()
        .map(|q| {
            let (mut indices, mut distances) = rank_gallery(queries.row(q), gallery, None);
            indices.truncate(k);
            distances.truncate(k);
            RetrievalResult {
                query_index: q,
                indices,
                distances,
            }
        })
        .collect())
}

/// Denominator of truncated average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApNormalization {
    /// `min(total_relevant, k)`.
    #[default]
    MinRelevantK,
    /// Number of relevant items inside the top `k`.
    RetrievedRelevant,
}

/// AP@k with the default normalization.
pub fn average_precision(flags: &[bool], total_relevant: usize, k: usize) -> f64 {
    average_precision_with(flags, total_relevant, k, ApNormalization::MinRelevantK)
}

pub fn average_precision_with(
    flags: &[bool],
    total_relevant: usize,
    k: usize,
    norm: ApNormalization,
) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, _) in flags.iter().take(k).enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (i + 1) as f64;
    }
    let denom = match norm {
        ApNormalization::MinRelevantK => total_relevant.min(k),
        ApNormalization::RetrievedRelevant => hits,
    };
    if denom == 0 {
        0.0
    } else {
        sum / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Truncation depth of AP.
    pub k: usize,
    /// Drop gallery item `i` from query `i`'s ranking (query set == gallery set).
    pub exclude_self: bool,
    pub normalization: ApNormalization,
}

impl EvalOptions {
    pub fn top(k: usize) -> Self {
        EvalOptions {
            k,
            exclude_self: false,
            normalization: ApNormalization::MinRelevantK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub radius: u32,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub map_at_k: f64,
    pub k: usize,
    pub per_query_ap: Vec<f64>,
    /// One point per Hamming radius `0..=K`, macro-averaged over queries.
    pub pr_curve: Vec<PrPoint>,
}

struct QueryStats {
    ap: f64,
    /// relevant and retrieved counts per exact distance
    rel_at: Vec<usize>,
    ret_at: Vec<usize>,
    total_relevant: usize,
}

/// mAP@k and the radius-indexed precision/recall curve.
///
/// Precision at a radius averages over queries that retrieve at least one
/// item there (0 when none do); recall averages over queries with at least
/// one relevant gallery item.
pub fn evaluate(
    queries: &PackedCodes,
    gallery: &PackedCodes,
    query_labels: &Labels,
    gallery_labels: &Labels,
    opts: &EvalOptions,
) -> Result<EvalSummary> {
    check_compatible(queries, gallery)?;
    if query_labels.len() != queries.len() {
        return Err(Error::MissingLabels(format!(
            "{} query labels for {} queries",
            query_labels.len(),
            queries.len()
        )));
    }
    if gallery_labels.len() != gallery.len() {
        return Err(Error::MissingLabels(format!(
            "{} gallery labels for {} gallery items",
            gallery_labels.len(),
            gallery.len()
        )));
    }
    if opts.k == 0 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    let kb = gallery.k_bits();
    let stats: Vec<QueryStats> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let skip = opts.exclude_self.then_some(q);
            let (order, dists) = rank_gallery(queries.row(q), gallery, skip);
            let flags: Vec<bool> = order
                .iter()
                .map(|&j| query_labels.shares(q, gallery_labels, j))
                .collect();
            let mut rel_at = vec![0usize; kb + 1];
            let mut ret_at = vec![0usize; kb + 1];
            for (&d, &f) in dists.iter().zip(&flags) {
                ret_at[d as usize] += 1;
                rel_at[d as usize] += usize::from(f);
            }
            let total_relevant = rel_at.iter().sum();
            QueryStats {
                ap: average_precision_with(&flags, total_relevant, opts.k, opts.normalization),
                rel_at,
                ret_at,
                total_relevant,
            }
        })
        .collect();

    let per_query_ap: Vec<f64> = stats.iter().map(|s| s.ap).collect();
    let map_at_k = if per_query_ap.is_empty() {
        0.0
    } else {
        per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64
    };

    let mut cum_rel = vec![0usize; stats.len()];
    let mut cum_ret = vec![0usize; stats.len()];
    let mut pr_curve = Vec::with_capacity(kb + 1);
    for r in 0..=kb {
        let (mut psum, mut pcount, mut rsum, mut rcount) = (0.0, 0usize, 0.0, 0usize);
        for (i, s) in stats.iter().enumerate() {
            cum_rel[i] += s.rel_at[r];
            cum_ret[i] += s.ret_at[r];
            if cum_ret[i] > 0 {
                psum += cum_rel[i] as f64 / cum_ret[i] as f64;
                pcount += 1;
            }
            if s.total_relevant > 0 {
                rsum += cum_rel[i] as f64 / s.total_relevant as f64;
                rcount += 1;
            }
        }
        pr_curve.push(PrPoint {
            radius: r as u32,
            precision: if pcount > 0 { psum / pcount as f64 } else { 0.0 },
            recall: if rcount > 0 { rsum / rcount as f64 } else { 0.0 },
        });
    }

    Ok(EvalSummary {
        map_at_k,
        k: opts.k,
        per_query_ap,
        pr_curve,
    })
}

/// Precision and recall after the top `c` results for each cutoff `c`,
/// macro-averaged over queries.
pub fn pr_at_cutoffs(
    queries: &PackedCodes,
    gallery: &PackedCodes,
    query_labels: &Labels,
    gallery_labels: &Labels,
    cutoffs: &[usize],
    exclude_self: bool,
) -> Result<Vec<(usize, f64, f64)>> {
    check_compatible(queries, gallery)?;
    let per_query: Vec<Vec<(f64, f64)>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let (order, _) = rank_gallery(queries.row(q), gallery, exclude_self.then_some(q));
            let flags: Vec<bool> = order
                .iter()
                .map(|&j| query_labels.shares(q, gallery_labels, j))
                .collect();
            let total = flags.iter().filter(|&&f| f).count().max(1) as f64;
            cutoffs
                .iter()
                .map(|&c| {
                    let c = c.min(flags.len()).max(1);
                    let hits = flags[..c].iter().filter(|&&f| f).count() as f64;
                    (hits / c as f64, hits / total)
                })
                .collect()
        })
        .collect();
    let nq = per_query.len().max(1) as f64;
    Ok(cutoffs
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let p = per_query.iter().map(|v| v[ci].0).sum::<f64>() / nq;
            let r = per_query.iter().map(|v| v[ci].1).sum::<f64>() / nq;
            (c, p, r)
        })
        .collect())
}
