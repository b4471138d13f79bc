//! Linear hash layer `b = sign(xW + bias)` and bit-packed binary codes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct HashModel<T> {
    weights: Matrix<T>,
    bias: Vec<T>,
}

impl<T: Scalar> HashModel<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if weights.cols() != bias.len() {
            return Err(Error::shape("HashModel::new", weights.cols(), bias.len()));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::Config("hash model needs d >= 1 and K >= 1".into()));
        }
        Ok(HashModel { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn k_bits(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Matrix<T>, &mut Vec<T>) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    /// Continuous codes `f = xW + bias`.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("forward", self.input_dim(), x.cols()));
        }
        let mut f = matmul(x, &self.weights)?;
        for i in 0..f.rows() {
            for (v, &b) in f.row_mut(i).iter_mut().zip(&self.bias) {
                *v = *v + b;
            }
        }
        Ok(f)
    }

    /// Binary codes for every row of `x`.
    pub fn encode(&self, x: &Matrix<T>) -> Result<PackedCodes> {
        Ok(pack_signs(&self.forward(x)?))
    }
}

/// Gaussian weights with variance 1/d and zero bias.
pub fn init_model<T: Scalar>(d: usize, k: usize, seed: u64) -> Result<HashModel<T>> {
    if d == 0 || k == 0 {
        return Err(Error::Config(format!(
            "model dimensions must be positive, got d={d}, K={k}"
        )));
    }
    let scale = 1.0 / (d as f64).sqrt();
    Ok(HashModel {
        weights: gaussian_matrix(d, k, scale, seed),
        bias: vec![T::zero(); k],
    })
}

pub(crate) fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, scale: f64, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z * scale)
    })
}

/// `+1` where `f >= 0`, `-1` elsewhere.
pub fn sign_codes<T: Scalar>(f: &Matrix<T>) -> Matrix<T> {
    f.map(sign)
}

#[inline]
pub fn sign<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// N binary codes of K bits, LSB-first in little-endian `u64` words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedCodes {
    n: usize,
    k_bits: usize,
    words: Vec<u64>,
}

#[inline]
pub fn words_per_code(k_bits: usize) -> usize {
    k_bits.div_ceil(64)
}

/// Mask of the valid bits in the last word of a code.
#[inline]
pub fn tail_mask(k_bits: usize) -> u64 {
    match k_bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl PackedCodes {
    pub fn zeros(n: usize, k_bits: usize) -> Self {
        PackedCodes {
            n,
            k_bits,
            words: vec![0; n * words_per_code(k_bits)],
        }
    }

    /// Wraps raw words; rejects wrong lengths and nonzero padding bits.
    pub fn from_words(n: usize, k_bits: usize, words: Vec<u64>) -> Result<Self> {
        if k_bits == 0 {
            return Err(Error::Domain("code length must be positive".into()));
        }
        let stride = words_per_code(k_bits);
        if words.len() != n * stride {
            return Err(Error::shape("PackedCodes::from_words", n * stride, words.len()));
        }
        let mask = tail_mask(k_bits);
        for i in 0..n {
            if words[i * stride + stride - 1] & !mask != 0 {
                return Err(Error::Domain(format!("code {i} has nonzero padding bits")));
            }
        }
        Ok(PackedCodes { n, k_bits, words })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k_bits(&self) -> usize {
        self.k_bits
    }

    pub fn stride(&self) -> usize {
        words_per_code(self.k_bits)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        let s = self.stride();
        &self.words[i * s..(i + 1) * s]
    }

    #[inline]
    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, j: usize, on: bool) {
        let s = self.stride();
        let w = &mut self.words[i * s + j / 64];
        if on {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn select(&self, idx: &[usize]) -> PackedCodes {
        let mut words = Vec::with_capacity(idx.len() * self.stride());
        for &i in idx {
            words.extend_from_slice(self.row(i));
        }
        PackedCodes {
            n: idx.len(),
            k_bits: self.k_bits,
            words,
        }
    }
}

/// Packs an exact ±1 matrix.
pub fn pack<T: Scalar>(codes: &Matrix<T>) -> Result<PackedCodes> {
    let k = codes.cols();
    if k == 0 {
        return Err(Error::Domain("code length must be positive".into()));
    }
    let mut out = PackedCodes::zeros(codes.rows(), k);
    let stride = out.stride();
    for i in 0..codes.rows() {
        let words = &mut out.words[i * stride..(i + 1) * stride];
        for (j, &v) in codes.row(i).iter().enumerate() {
            if v == T::one() {
                words[j / 64] |= 1 << (j % 64);
            } else if v != -T::one() {
                return Err(Error::Encoding {
                    row: i,
                    col: j,
                    value: v.as_f64(),
                });
            }
        }
    }
    Ok(out)
}

/// Sign-thresholds continuous codes straight into packed form.
pub fn pack_signs<T: Scalar>(f: &Matrix<T>) -> PackedCodes {
    let mut out = PackedCodes::zeros(f.rows(), f.cols());
    let stride = out.stride();
    for i in 0..f.rows() {
        let words = &mut out.words[i * stride..(i + 1) * stride];
        for (j, &v) in f.row(i).iter().enumerate() {
            if v >= T::zero() {
                words[j / 64] |= 1 << (j % 64);
            }
        }
    }
    out
}

pub fn unpack<T: Scalar>(codes: &PackedCodes) -> Matrix<T> {
    Matrix::from_fn(codes.n, codes.k_bits, |i, j| {
        if codes.bit(i, j) {
            T::one()
        } else {
            -T::one()
        }
    })
}
