//! Similarity-collapse diagnostics.
//!
//! Positive and negative pairs are sampled from labelled data, their
//! similarities are binned into per-class normalized histograms, and the
//! overlap of the two histograms is reported as the intersection score:
//! 1 means the classes are indistinguishable, 0 means they separate.
//! Labels are only ever consumed here, never by the trainer.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Labels;
use crate::error::{Error, Result};
use crate::hash_model::PackedCodes;
use crate::linalg::{cosine, Matrix};
use crate::retrieval::{code_similarity, hamming_words};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

pub type Pair = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampledPairs {
    pub positive: Vec<Pair>,
    pub negative: Vec<Pair>,
}

fn has_positive_pair(labels: &Labels) -> bool {
    match labels {
        Labels::Single(v) => {
            let mut seen = HashSet::new();
            v.iter().any(|l| !seen.insert(*l))
        }
        Labels::Multi(v) => {
            let mut seen = 0u64;
            v.iter().any(|&m| {
                let hit = seen & m != 0;
                seen |= m;
                hit
            })
        }
    }
}

fn has_negative_pair(labels: &Labels) -> bool {
    match labels {
        Labels::Single(v) => v.iter().any(|l| *l != v[0]),
        Labels::Multi(v) => {
            let mut distinct: Vec<u64> = v.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let zero_count = v.iter().filter(|&&m| m == 0).count();
            if zero_count > 0 {
                return v.len() >= 2;
            }
            distinct
                .iter()
                .enumerate()
                .any(|(a, &x)| distinct[a + 1..].iter().any(|&y| x & y == 0))
        }
    }
}

/// Uniform random pairs `i < j`, split by whether the two items share a label.
///
/// Pairs are drawn uniformly and routed to whichever class still needs
/// samples; draws for a full class are rejected. Sampling is with
/// replacement. Asking for zero pairs of a class that does not exist is fine.
pub fn sample_pairs(labels: &Labels, n_pos: usize, n_neg: usize, seed: u64) -> Result<SampledPairs> {
    let n = labels.len();
    if n_pos + n_neg == 0 {
        return Ok(SampledPairs::default());
    }
    if n < 2 {
        return Err(Error::Sampling(format!("{n} items cannot form a pair")));
    }
    if n_pos > 0 && !has_positive_pair(labels) {
        return Err(Error::Sampling("no two items share a label, so no positive pairs exist".into()));
    }
    if n_neg > 0 && !has_negative_pair(labels) {
        return Err(Error::Sampling("every pair shares a label, so no negative pairs exist".into()));
    }
    let mut rng = stream_rng(seed, Stream::Pairs);
    let mut out = SampledPairs {
        positive: Vec::with_capacity(n_pos),
        negative: Vec::with_capacity(n_neg),
    };
    let budget = 1000 * (n_pos + n_neg) as u64 + 1_000_000;
    let mut draws = 0u64;
    while out.positive.len() < n_pos || out.negative.len() < n_neg {
        draws += 1;
        if draws > budget {
            return Err(Error::Sampling(format!(
                "gave up after {budget} draws with {} positive and {} negative pairs",
                out.positive.len(),
                out.negative.len()
            )));
        }
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n - 1);
        let j = if j >= i { j + 1 } else { j };
        let pair = (i.min(j), i.max(j));
        if labels.shares(i, labels, j) {
            if out.positive.len() < n_pos {
                out.positive.push(pair);
            }
        } else if out.negative.len() < n_neg {
            out.negative.push(pair);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    pub bin_edges: Vec<f64>,
    pub positive_mass: Vec<f64>,
    pub negative_mass: Vec<f64>,
    pub sample_counts: (usize, usize),
}

impl SimilarityHistogram {
    pub fn bins(&self) -> usize {
        self.positive_mass.len()
    }
}

/// Uniform bin index over `[−1, 1]`; `1` falls in the last bin.
pub fn bin_index(v: f64, bins: usize) -> usize {
    let b = bins as f64;
    // v·b rounds to the exact integer for bin-aligned inputs
    (((v * b + b) / 2.0).floor() as usize).min(bins - 1)
}

fn masses(values: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0u64; bins];
    for &v in values {
        counts[bin_index(v, bins)] += 1;
    }
    let n = values.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

pub fn build_histogram(sims_pos: &[f64], sims_neg: &[f64], bins: usize) -> Result<SimilarityHistogram> {
    if bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    if sims_pos.is_empty() {
        return Err(Error::Empty("positive similarities"));
    }
    if sims_neg.is_empty() {
        return Err(Error::Empty("negative similarities"));
    }
    if let Some(v) = sims_pos.iter().chain(sims_neg).find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("similarity {v} outside [-1, 1]")));
    }
    let mut bin_edges: Vec<f64> = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
    bin_edges[bins] = 1.0;
    Ok(SimilarityHistogram {
        bin_edges,
        positive_mass: masses(sims_pos, bins),
        negative_mass: masses(sims_neg, bins),
        sample_counts: (sims_pos.len(), sims_neg.len()),
    })
}

/// `Σ min(positive_mass, negative_mass)`, clamped to `[0, 1]`.
pub fn intersection_score(h: &SimilarityHistogram) -> f64 {
    h.positive_mass
        .iter()
        .zip(&h.negative_mass)
        .map(|(p, n)| p.min(*n))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollapseConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        CollapseConfig {
            n_pos: 10_000,
            n_neg: 100_000,
            bins: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub intersection: f64,
    pub config: CollapseConfig,
    pub n_pos: usize,
    pub n_neg: usize,
    #[serde(skip)]
    pub histogram: SimilarityHistogram,
    #[serde(skip)]
    pub pairs: SampledPairs,
    #[serde(skip)]
    pub positive_sims: Vec<f64>,
    #[serde(skip)]
    pub negative_sims: Vec<f64>,
}

fn report_with(
    n: usize,
    labels: &Labels,
    cfg: &CollapseConfig,
    sim: impl Fn(usize, usize) -> Result<f64> + Sync,
) -> Result<CollapseReport> {
    if labels.len() != n {
        return Err(Error::shape("collapse_report labels", n, labels.len()));
    }
    let pairs = sample_pairs(labels, cfg.n_pos, cfg.n_neg, cfg.seed)?;
    let eval = |ps: &[Pair]| -> Result<Vec<f64>> { ps.par_iter().map(|&(i, j)| sim(i, j)).collect() };
    let positive_sims = eval(&pairs.positive)?;
    let negative_sims = eval(&pairs.negative)?;
    let histogram = build_histogram(&positive_sims, &negative_sims, cfg.bins)?;
    Ok(CollapseReport {
        intersection: intersection_score(&histogram),
        config: *cfg,
        n_pos: positive_sims.len(),
        n_neg: negative_sims.len(),
        histogram,
        pairs,
        positive_sims,
        negative_sims,
    })
}

/// Intersection of code-similarity histograms for sampled pairs.
///
/// Similarities are cosines of the ±1 codes, i.e. `(K − 2·hamming)/K`.
pub fn collapse_report(codes: &PackedCodes, labels: &Labels, cfg: &CollapseConfig) -> Result<CollapseReport> {
    let k = codes.k_bits();
    report_with(codes.len(), labels, cfg, |i, j| {
        Ok(code_similarity(hamming_words(codes.row(i), codes.row(j), k), k))
    })
}

/// The same report on cosine similarities of raw feature vectors.
pub fn feature_collapse_report<T: Scalar>(
    x: &Matrix<T>,
    labels: &Labels,
    cfg: &CollapseConfig,
) -> Result<CollapseReport> {
    report_with(x.rows(), labels, cfg, |i, j| {
        cosine(x.row(i), x.row(j))
            .map(|c| c.as_f64())
            .ok_or(Error::ZeroRow {
                op: "feature_collapse_report",
                row: if x.row(i).iter().all(|v| v.is_zero()) { i } else { j },
            })
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

pub fn write_histogram_csv(path: impl AsRef<Path>, h: &SimilarityHistogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    w.write_record(["bin_low", "bin_high", "pos_mass", "neg_mass"]).map_err(csv_err)?;
    for b in 0..h.bins() {
        w.serialize((h.bin_edges[b], h.bin_edges[b + 1], h.positive_mass[b], h.negative_mass[b]))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// One row per sampled pair: `kind,i,j,similarity`.
pub fn write_pairs_csv(path: impl AsRef<Path>, report: &CollapseReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    w.write_record(["kind", "i", "j", "similarity"]).map_err(csv_err)?;
    let rows = [
        ("positive", &report.pairs.positive, &report.positive_sims),
        ("negative", &report.pairs.negative, &report.negative_sims),
    ];
    for (kind, pairs, sims) in rows {
        for (&(i, j), s) in pairs.iter().zip(sims.iter()) {
            w.serialize((kind, i, j, s)).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash_model::pack;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hist(p: Vec<f64>, n: Vec<f64>) -> SimilarityHistogram {
        SimilarityHistogram {
            bin_edges: vec![-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0],
            positive_mass: p,
            negative_mass: n,
            sample_counts: (1, 1),
        }
    }

    #[test]
    fn intersection_hand_values() {
        assert_eq!(intersection_score(&hist(vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5])), 0.5);
        assert_eq!(intersection_score(&hist(vec![0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5])), 1.0);
        assert_eq!(intersection_score(&hist(vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0])), 0.0);
    }

    #[test]
    fn histogram_single_bin_and_errors() {
        let h = build_histogram(&[0.5, 0.502, 0.509], &[0.505], 200).unwrap();
        let b = bin_index(0.5, 200);
        assert_eq!(h.positive_mass[b], 1.0);
        assert_eq!(h.negative_mass[b], 1.0);
        assert_eq!(h.bin_edges.len(), 201);
        assert_eq!((h.bin_edges[0], h.bin_edges[200]), (-1.0, 1.0));
        assert!(matches!(build_histogram(&[1.0 + 1e-12], &[0.0], 10), Err(Error::Domain(_))));
        assert!(build_histogram(&[], &[0.0], 10).is_err());
        assert!(build_histogram(&[0.0], &[0.0], 1).is_err());
        // 1.0 goes in the last bin, −1.0 in the first
        let h = build_histogram(&[1.0], &[-1.0], 4).unwrap();
        assert_eq!(h.positive_mass, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(h.negative_mass, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn histogram_matches_counting_oracle() {
        // integer-aligned: value v ∈ {−10..9}/10 sits at the low edge of bin v+10 (20 bins)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ints: Vec<i32> = (0..1000).map(|_| rng.random_range(-10..10)).collect();
        let vals: Vec<f64> = ints.iter().map(|&v| v as f64 / 10.0).collect();
        let h = build_histogram(&vals, &vals, 20).unwrap();
        for b in 0..20 {
            let count = ints.iter().filter(|&&v| v + 10 == b as i32).count();
            assert_eq!(h.positive_mass[b], count as f64 / 1000.0);
        }
        let uniform: Vec<f64> = (0..2000).map(|i| -1.0 + (i as f64 + 0.5) / 1000.0).collect();
        let h = build_histogram(&uniform, &uniform, 20).unwrap();
        assert!(h.positive_mass.iter().all(|m| (m - 0.05).abs() < 1e-3));
    }

    #[test]
    fn sample_pairs_edge_cases() {
        let one_class = Labels::Single(vec![3; 10]);
        assert!(matches!(sample_pairs(&one_class, 5, 5, 0), Err(Error::Sampling(_))));
        assert_eq!(sample_pairs(&one_class, 5, 0, 0).unwrap().positive.len(), 5);

        let two = Labels::Single(vec![0, 1]);
        let p = sample_pairs(&two, 0, 3, 0).unwrap();
        assert!(p.positive.is_empty());
        assert!(p.negative.iter().all(|&pair| pair == (0, 1)));
        assert!(matches!(sample_pairs(&two, 1, 1, 0), Err(Error::Sampling(_))));

        let multi = Labels::Multi(vec![0b01, 0b11, 0b10]);
        let p = sample_pairs(&multi, 20, 20, 1).unwrap();
        assert!(p.positive.iter().all(|&(i, j)| (i, j) != (0, 2)));
        assert!(p.negative.iter().all(|&pair| pair == (0, 2)));
        assert!(sample_pairs(&Labels::Multi(vec![1, 3, 7]), 1, 1, 0).is_err());
    }

    #[test]
    fn sampled_pairs_respect_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = Labels::Single((0..500).map(|_| rng.random_range(0..10)).collect());
        let Labels::Single(l) = &labels else { unreachable!() };
        let p = sample_pairs(&labels, 1000, 1000, 4).unwrap();
        assert!(p.positive.iter().all(|&(i, j)| i < j && l[i] == l[j]));
        assert!(p.negative.iter().all(|&(i, j)| i < j && l[i] != l[j]));
        assert_eq!(p, sample_pairs(&labels, 1000, 1000, 4).unwrap());
    }

    fn codes_from(rows: &[Vec<f64>]) -> PackedCodes {
        pack(&Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn collapse_identical_codes() {
        let codes = codes_from(&vec![vec![1.0, -1.0, 1.0, 1.0]; 40]);
        let labels = Labels::Single((0..40).map(|i| i % 4).collect());
        let cfg = CollapseConfig { n_pos: 100, n_neg: 300, ..Default::default() };
        let r = collapse_report(&codes, &labels, &cfg).unwrap();
        assert_eq!(r.intersection, 1.0);
        assert_eq!((r.n_pos, r.n_neg), (100, 300));
    }

    #[test]
    fn collapse_one_hot_codes_separate() {
        let k = 16;
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| (0..k).map(|b| if b / 4 == i % 4 { 1.0 } else { -1.0 }).collect())
            .collect();
        let labels = Labels::Single((0..40).map(|i| (i % 4) as u32).collect());
        let cfg = CollapseConfig { n_pos: 200, n_neg: 200, seed: 2, ..Default::default() };
        let r = collapse_report(&codes_from(&rows), &labels, &cfg).unwrap();
        assert_eq!(r.intersection, 0.0);
        assert!(r.positive_sims.iter().all(|&s| s == 1.0));
        assert!(r.negative_sims.iter().all(|&s| s < 1.0));
        let again = collapse_report(&codes_from(&rows), &labels, &cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn feature_report_rejects_zero_rows() {
        let x = Matrix::<f64>::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
        let labels = Labels::Single(vec![0, 0, 1]);
        let cfg = CollapseConfig { n_pos: 5, n_neg: 5, ..Default::default() };
        assert!(matches!(feature_collapse_report(&x, &labels, &cfg), Err(Error::ZeroRow { .. })));
    }

    #[test]
    fn csv_outputs() {
        let codes = codes_from(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]]);
        let labels = Labels::Single(vec![0, 0, 1]);
        let cfg = CollapseConfig { n_pos: 3, n_neg: 4, bins: 4, seed: 0 };
        let r = collapse_report(&codes, &labels, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_histogram_csv(dir.path().join("h.csv"), &r.histogram).unwrap();
        write_pairs_csv(dir.path().join("p.csv"), &r).unwrap();
        let h = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
        assert_eq!(h.lines().count(), 5);
        assert!(h.starts_with("bin_low,bin_high,pos_mass,neg_mass\n-1.0,-0.5,"));
        let p = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
        assert_eq!(p.lines().count(), 8);
        assert!(p.lines().nth(1).unwrap().starts_with("positive,0,1,0.0"));
    }

    proptest! {
        #[test]
        fn similarities_sit_on_lattice(k in 1usize..=96, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..30)
                .map(|_| (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
                .collect();
            let labels = Labels::Single((0..30).map(|i| i % 3).collect());
            let cfg = CollapseConfig { n_pos: 50, n_neg: 50, seed, ..Default::default() };
            let r = collapse_report(&codes_from(&rows), &labels, &cfg).unwrap();
            let lattice: Vec<f64> = (0..=k).map(|m| (k as f64 - 2.0 * m as f64) / k as f64).collect();
            for s in r.positive_sims.iter().chain(&r.negative_sims) {
                prop_assert!(lattice.contains(s));
            }
            let total: f64 = r.histogram.positive_mass.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn intersection_bounds_and_permutation(
            p in proptest::collection::vec(0.0f64..1.0, 8),
            q in proptest::collection::vec(0.0f64..1.0, 8),
            rot in 0usize..8,
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-3;
                v.iter().map(|x| (x + 1e-3 / 8.0) / s).collect::<Vec<_>>()
            };
            let (p, q) = (norm(&p), norm(&q));
            let edges: Vec<f64> = (0..=8).map(|i| -1.0 + i as f64 / 4.0).collect();
            let mk = |a: Vec<f64>, b: Vec<f64>| SimilarityHistogram {
                bin_edges: edges.clone(), positive_mass: a, negative_mass: b, sample_counts: (1, 1),
            };
            let s = intersection_score(&mk(p.clone(), q.clone()));
            prop_assert!((0.0..=1.0).contains(&s));
            let (mut pr, mut qr) = (p.clone(), q.clone());
            pr.rotate_left(rot);
            qr.rotate_left(rot);
            prop_assert!((intersection_score(&mk(pr, qr)) - s).abs() < 1e-12);
            prop_assert!((intersection_score(&mk(p.clone(), p)) - 1.0).abs() < 1e-9);
        }
    }
}
