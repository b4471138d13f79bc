//! Gaussian cluster data for desk-scale experiments.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Labels};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seeding::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub points_per_cluster: usize,
    pub dim: usize,
    /// Standard deviation of the i.i.d. Gaussian cluster centers.
    pub center_scale: f64,
    /// Standard deviation of points around their center.
    pub within_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_clusters: 4,
            points_per_cluster: 250,
            dim: 128,
            center_scale: 1.0,
            within_std: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.points_per_cluster == 0 || self.dim == 0 {
            return Err(Error::Config("synthetic counts must all be >= 1".into()));
        }
        if !(self.within_std >= 0.0 && self.center_scale >= 0.0) {
            return Err(Error::Config("synthetic scales must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Points are laid out cluster by cluster; labels are cluster ids.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureMatrix<f64>> {
    spec.validate()?;
    let mut crng = stream_rng(spec.seed, Stream::Centers);
    let centers = Matrix::from_fn(spec.n_clusters, spec.dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut crng);
        z * spec.center_scale
    });
    let mut prng = stream_rng(spec.seed, Stream::Points);
    let n = spec.n_clusters * spec.points_per_cluster;
    let x = Matrix::from_fn(n, spec.dim, |i, j| {
        let z: f64 = StandardNormal.sample(&mut prng);
        centers[(i / spec.points_per_cluster, j)] + z * spec.within_std
    });
    let labels = (0..n)
        .map(|i| (i / spec.points_per_cluster) as u32)
        .collect();
    FeatureMatrix::new(x, Some(Labels::Single(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scatter_ratio(fm: &FeatureMatrix<f64>, k: usize) -> f64 {
        let Labels::Single(l) = fm.labels.as_ref().unwrap() else { unreachable!() };
        let d = fm.dim();
        let mut means = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, r) in fm.x.row_iter().enumerate() {
            counts[l[i] as usize] += 1;
            for (m, v) in means[l[i] as usize].iter_mut().zip(r) {
                *m += v;
            }
        }
        for (m, c) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= *c as f64);
        }
        let grand: Vec<f64> = (0..d).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / k as f64).collect();
        let between: f64 = means
            .iter()
            .zip(&counts)
            .map(|(m, &c)| c as f64 * m.iter().zip(&grand).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum();
        let within: f64 = fm
            .x
            .row_iter()
            .enumerate()
            .map(|(i, r)| r.iter().zip(&means[l[i] as usize]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum();
        between / within
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let spec = SyntheticSpec {
            n_clusters: 3,
            points_per_cluster: 5,
            dim: 4,
            within_std: 0.0,
            ..Default::default()
        };
        let fm = generate_synthetic(&spec).unwrap();
        for c in 0..3 {
            for p in 1..5 {
                assert_eq!(fm.x.row(c * 5), fm.x.row(c * 5 + p));
            }
        }
    }

    #[test]
    fn labels_balanced_and_deterministic() {
        let spec = SyntheticSpec {
            seed: 3,
            ..Default::default()
        };
        let fm = generate_synthetic(&spec).unwrap();
        let Labels::Single(l) = fm.labels.clone().unwrap() else { unreachable!() };
        for c in 0..4 {
            assert_eq!(l.iter().filter(|&&v| v == c).count(), 250);
        }
        assert_eq!(generate_synthetic(&spec).unwrap(), fm);
        assert!(generate_synthetic(&SyntheticSpec { dim: 0, ..spec }).is_err());
    }

    #[test]
    fn scatter_grows_with_center_scale() {
        let mut last = 0.0;
        for scale in [0.25, 0.5, 1.0, 2.0] {
            let spec = SyntheticSpec {
                points_per_cluster: 100,
                dim: 32,
                center_scale: scale,
                seed: 1,
                ..Default::default()
            };
            let r = scatter_ratio(&generate_synthetic(&spec).unwrap(), 4);
            assert!(r > last, "ratio {r} at scale {scale}");
            last = r;
        }
    }
}
