//! Mini-batch Adam training of the hash layer.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{BetaDistribution, TargetCache};
use crate::dataio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::hash_model::{init_model, pack_signs, HashModel, PackedCodes};
use crate::linalg::{adam_update_in_place, matmul_tn, AdamConfig, AdamState, Matrix};
use crate::losses::{total_loss, Objective, PairTerm};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, stream_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairObjective {
    Sdc,
    Preservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub k_bits: usize,
    pub lambda_q: f64,
    pub lambda_cl: f64,
    pub calib_alpha: f64,
    pub calib_beta: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub objective: PairObjective,
    /// Exponent of the preservation loss when `objective = preservation`.
    pub preservation_p: u8,
    pub temperature: f64,
    /// View noise std as a fraction of the global feature std.
    pub view_noise: f64,
    /// Per-coordinate dropout probability for contrastive views.
    pub view_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr: 1e-4,
            k_bits: 64,
            lambda_q: 1.0,
            lambda_cl: 1.0,
            calib_alpha: 5.0,
            calib_beta: 5.0,
            seed: 0,
            shuffle: true,
            objective: PairObjective::Sdc,
            preservation_p: 2,
            temperature: 0.2,
            view_noise: 0.1,
            view_dropout: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.k_bits == 0 {
            return bad("k_bits must be >= 1");
        }
        if !(self.calib_alpha > 0.0 && self.calib_beta > 0.0) {
            return bad("calibration shapes must be positive");
        }
        if !(self.lambda_q >= 0.0 && self.lambda_cl >= 0.0) {
            return bad("loss weights must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.view_dropout) || !(self.view_noise >= 0.0) {
            return bad("view dropout must be in [0, 1) and noise nonnegative");
        }
        Ok(())
    }

    fn objective<T: Scalar>(&self) -> Result<Objective<T>> {
        Ok(Objective {
            pair_term: match self.objective {
                PairObjective::Sdc => PairTerm::Sdc,
                PairObjective::Preservation => PairTerm::Preservation {
                    p: self.preservation_p,
                },
            },
            calibration: BetaDistribution::new(T::lit(self.calib_alpha), T::lit(self.calib_beta))?,
            lambda_q: T::lit(self.lambda_q),
            lambda_cl: T::lit(self.lambda_cl),
            temperature: T::lit(self.temperature),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub loss: f64,
    /// Mean of the pair term (calibration or preservation).
    pub pair: f64,
    pub quantization: f64,
    pub contrastive: Option<f64>,
    /// Excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn first(&self) -> Option<&EpochRecord> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Compares everything except timing.
    pub fn same_losses(&self, other: &TrainReport) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.batches == b.batches
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.pair.to_bits() == b.pair.to_bits()
                    && a.quantization.to_bits() == b.quantization.to_bits()
                    && a.contrastive.map(f64::to_bits) == b.contrastive.map(f64::to_bits)
            })
    }
}

pub fn train<T: Scalar>(
    features: &FeatureMatrix<T>,
    cfg: &TrainConfig,
) -> Result<(HashModel<T>, TrainReport)> {
    train_with_observer(features, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `observer(epoch, &model)` after every epoch.
pub fn train_with_observer<T: Scalar>(
    features: &FeatureMatrix<T>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &HashModel<T>) -> Result<()>,
) -> Result<(HashModel<T>, TrainReport)> {
    cfg.validate()?;
    let (n, d) = features.x.shape();
    if d == 0 {
        return Err(Error::Config("features have zero dimensions".into()));
    }
    if n < cfg.batch_size {
        return Err(Error::InsufficientBatch {
            got: n,
            min: cfg.batch_size,
        });
    }
    let objective = cfg.objective::<T>()?;
    let cache = TargetCache::new();
    let mut model = init_model::<T>(d, cfg.k_bits, stream_seed(cfg.seed, Stream::Init))?;
    let adam_cfg = AdamConfig::with_lr(T::lit(cfg.lr));
    let mut adam_w = AdamState::new(d, cfg.k_bits, &adam_cfg);
    let mut adam_b = AdamState::new(1, cfg.k_bits, &adam_cfg);
    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise);
    let noise_std = T::lit(cfg.view_noise) * global_std(&features.x);
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let (mut loss, mut pair, mut quant, mut cl) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let xb = features.x.select_rows(chunk);
            let f = model.forward(&xb)?;
            let views = if objective.uses_views() {
                let x1 = augment(&xb, noise_std, cfg.view_dropout, &mut noise_rng);
                let x2 = augment(&xb, noise_std, cfg.view_dropout, &mut noise_rng);
                let (f1, f2) = (model.forward(&x1)?, model.forward(&x2)?);
                Some((x1, x2, f1, f2))
            } else {
                None
            };
            let step = total_loss(
                &f,
                &xb,
                &objective,
                views.as_ref().map(|(_, _, f1, f2)| (f1, f2)),
                &cache,
            )
            .map_err(|e| match e {
                Error::ZeroRow { .. } => Error::NonFinite {
                    epoch,
                    batch: bi,
                    what: e.to_string(),
                },
                other => other,
            })?;
            if !step.value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi,
                    what: format!("loss is {}", step.value),
                });
            }

            let mut grad_w = matmul_tn(&xb, &step.grad_f)?;
            let mut grad_b = step.grad_f.column_sums();
            if let (Some((x1, x2, _, _)), Some((g1, g2))) = (&views, &step.grad_views) {
                grad_w.axpy(T::one(), &matmul_tn(x1, g1)?)?;
                grad_w.axpy(T::one(), &matmul_tn(x2, g2)?)?;
                for (b, (a, c)) in grad_b.iter_mut().zip(g1.column_sums().into_iter().zip(g2.column_sums())) {
                    *b = *b + a + c;
                }
            }
            let (w, bias) = model.params_mut();
            adam_update_in_place(w, &grad_w, &mut adam_w)?;
            let mut bias_m = Matrix::from_vec(1, bias.len(), std::mem::take(bias))?;
            adam_update_in_place(&mut bias_m, &Matrix::from_vec(1, grad_b.len(), grad_b)?, &mut adam_b)?;
            *bias = bias_m.into_vec();
            if !model.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi,
                    what: "model parameters became non-finite".into(),
                });
            }

            loss += step.value.as_f64();
            pair += step.pair.as_f64();
            quant += step.quantization.as_f64();
            cl += step.contrastive.map_or(0.0, |v| v.as_f64());
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        let rec = EpochRecord {
            epoch,
            batches,
            loss: loss / nb,
            pair: pair / nb,
            quantization: quant / nb,
            contrastive: objective.uses_views().then_some(cl / nb),
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} pair {:.6} quant {:.6}",
            rec.loss,
            rec.pair,
            rec.quantization
        );
        records.push(rec);
        observer(epoch, &model)?;
    }
    Ok((model, TrainReport { epochs: records }))
}

fn global_std<T: Scalar>(x: &Matrix<T>) -> T {
    let vals = x.as_slice();
    if vals.is_empty() {
        return T::zero();
    }
    let n = T::from_usize_lossy(vals.len());
    let mean = vals.iter().copied().sum::<T>() / n;
    (vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n).sqrt()
}

/// Feature-space view: Gaussian jitter plus coordinate dropout.
fn augment<T: Scalar>(x: &Matrix<T>, noise_std: T, dropout: f64, rng: &mut ChaCha8Rng) -> Matrix<T> {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let v = x[(i, j)];
        let z: f64 = StandardNormal.sample(rng);
        let keep = dropout == 0.0 || rng.random::<f64>() >= dropout;
        if keep {
            v + noise_std * T::lit(z)
        } else {
            T::zero()
        }
    })
}

const ENCODE_CHUNK: usize = 4096;

/// Signs and packs the whole feature set, in chunks.
pub fn encode_dataset<T: Scalar>(model: &HashModel<T>, features: &FeatureMatrix<T>) -> Result<PackedCodes> {
    if features.dim() != model.input_dim() {
        return Err(Error::shape("encode_dataset", model.input_dim(), features.dim()));
    }
    let n = features.n();
    let k = model.k_bits();
    let mut words = Vec::with_capacity(n * crate::hash_model::words_per_code(k));
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(ENCODE_CHUNK) {
        let f = model.forward(&features.x.select_rows(chunk))?;
        words.extend_from_slice(pack_signs(&f).words());
    }
    PackedCodes::from_words(n, k, words)
}
