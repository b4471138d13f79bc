//! Learning compact binary hash codes with similarity distribution calibration.
//!
//! A linear sign hash `b = sign(xW + c)` is trained so that the sorted
//! pairwise cosine similarities of its continuous codes follow the quantiles
//! of a Beta calibration distribution. Spreading similarities over the whole
//! range keeps positive and negative pairs from collapsing onto the same
//! Hamming distances.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar type for the common cases.
//!
//! ```
//! use sdc_core::{dataio, trainer, retrieval};
//!
//! let data = dataio::generate_synthetic(&dataio::SyntheticSpec {
//!     points_per_cluster: 20,
//!     dim: 16,
//!     ..Default::default()
//! })
//! .unwrap();
//! let cfg = trainer::TrainConfig { epochs: 2, k_bits: 8, batch_size: 16, ..Default::default() };
//! let (model, _report) = trainer::train(&data, &cfg).unwrap();
//! let codes = trainer::encode_dataset(&model, &data).unwrap();
//! let labels = data.labels().unwrap();
//! let summary = retrieval::evaluate(&codes, &codes, labels, labels, &retrieval::EvalOptions::top(10)).unwrap();
//! assert!(summary.map_at_k > 0.0);
//! ```

pub mod analysis;
pub mod baselines;
pub mod calibration;
pub mod dataio;
pub mod error;
pub mod hash_model;
pub mod linalg;
pub mod losses;
pub mod retrieval;
pub mod scalar;
pub mod seeding;
pub mod trainer;

pub use analysis::{collapse_report, intersection_score, CollapseConfig, CollapseReport, SimilarityHistogram};
pub use baselines::{encode_itq, fit_itq, fit_lsh, ItqModel, ItqOptions};
pub use calibration::{BetaDistribution, BinomialBucketDistribution, CalibrationDistribution, TargetCache};
pub use dataio::{FeatureMatrix, Labels};
pub use error::{Error, Result};
pub use hash_model::{HashModel, PackedCodes};
pub use linalg::Matrix;
pub use losses::{Objective, PairTerm};
pub use retrieval::{evaluate, search_topk, EvalOptions, EvalSummary};
pub use scalar::Scalar;
pub use trainer::{train, TrainConfig, TrainReport};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type HashModel64 = HashModel<f64>;
pub type HashModel32 = HashModel<f32>;
pub type BetaDistribution64 = BetaDistribution<f64>;
pub type BetaDistribution32 = BetaDistribution<f32>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
