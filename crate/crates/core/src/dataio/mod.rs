//! On-disk formats, labels and synthetic data.
//!
//! All binary formats are little-endian with a 4-byte magic and a `u32`
//! version. Features are stored as `f32`, model parameters as `f64`.

mod bytes;
mod checkpoint;
mod codes;
mod features;
mod synthetic;

pub use checkpoint::{
    decode_checkpoint, encode_itq_checkpoint, encode_model, read_checkpoint, read_itq, read_model,
    write_itq, write_model, Checkpoint, ITQ_MAGIC, MODEL_MAGIC,
};
pub use codes::{decode_codes, encode_codes, read_codes, write_codes, CODE_MAGIC};
pub use features::{
    decode_features, encode_features, read_features, read_features_csv, read_features_with,
    write_features, write_features_csv, FeatureReadOptions, FEATURE_MAGIC,
};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// Class labels, one entry per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Labels {
    /// One class id per item; relevance is equality.
    Single(Vec<u32>),
    /// Bitmask over at most 64 classes; relevance is a nonempty intersection.
    Multi(Vec<u64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Single(v) => v.len(),
            Labels::Multi(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_multi(&self) -> bool {
        matches!(self, Labels::Multi(_))
    }

    /// Whether item `i` of `self` and item `j` of `other` share a label.
    #[inline]
    pub fn shares(&self, i: usize, other: &Labels, j: usize) -> bool {
        match (self, other) {
            (Labels::Single(a), Labels::Single(b)) => a[i] == b[j],
            (Labels::Multi(a), Labels::Multi(b)) => a[i] & b[j] != 0,
            (Labels::Single(a), Labels::Multi(b)) => label_bit(a[i]) & b[j] != 0,
            (Labels::Multi(a), Labels::Single(b)) => a[i] & label_bit(b[j]) != 0,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Single(v) => Labels::Single(idx.iter().map(|&i| v[i]).collect()),
            Labels::Multi(v) => Labels::Multi(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

fn label_bit(l: u32) -> u64 {
    if l < 64 {
        1u64 << l
    } else {
        0
    }
}

/// N×d features with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub x: Matrix<T>,
    pub labels: Option<Labels>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(x: Matrix<T>, labels: Option<Labels>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::shape("FeatureMatrix::new", x.rows(), l.len()));
            }
        }
        Ok(FeatureMatrix { x, labels })
    }

    pub fn unlabeled(x: Matrix<T>) -> Self {
        FeatureMatrix { x, labels: None }
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn labels(&self) -> Result<&Labels> {
        self.labels
            .as_ref()
            .ok_or_else(|| Error::MissingLabels("feature set has no labels".into()))
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix<T> {
        FeatureMatrix {
            x: self.x.select_rows(idx),
            labels: self.labels.as_ref().map(|l| l.select(idx)),
        }
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            x: self.x.cast(),
            labels: self.labels.clone(),
        }
    }
}
