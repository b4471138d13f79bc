//! Calibration distributions for code similarities.
//!
//! [`BetaDistribution`] supplies the target quantiles that code similarities
//! are pulled towards during training. [`BinomialBucketDistribution`] is the
//! Hamming distance law of two uniformly drawn K-bit codes, the shape a
//! well-spread hash function approaches.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const CF_MAX_ITER: usize = 500;
const ICDF_MAX_ITER: usize = 200;
const ICDF_BRACKET: f64 = 1e-3;

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

/// ln B(a, b).
pub fn ln_beta<T: Scalar>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn check_shape<T: Scalar>(a: T, b: T) -> Result<()> {
    if !(a > T::zero() && b > T::zero() && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "beta shape parameters must be positive and finite, got ({a}, {b})"
        )));
    }
    Ok(())
}

fn check_unit<T: Scalar>(what: &str, x: T) -> Result<()> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Domain(format!("{what} = {x} is outside [0, 1]")));
    }
    Ok(())
}

/// Regularized incomplete beta function I_x(a, b).
///
/// Continued fraction (modified Lentz), evaluated on whichever of
/// `I_x(a,b)` / `1 - I_{1-x}(b,a)` converges faster.
pub fn regularized_incomplete_beta<T: Scalar>(a: T, b: T, x: T) -> Result<T> {
    check_shape(a, b)?;
    check_unit("x", x)?;
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let one = T::one();
    let two = one + one;
    if x > (a + one) / (a + b + two) {
        Ok(one - incbeta_cf(b, a, one - x)?)
    } else {
        incbeta_cf(a, b, x)
    }
}

fn incbeta_cf<T: Scalar>(a: T, b: T, x: T) -> Result<T> {
    let one = T::one();
    let two = one + one;
    let eps = T::epsilon();
    let tiny = T::min_positive_value() / eps;

    let ln_front = a * x.ln() + b * (one - x).ln() - ln_beta(a, b);
    let front = ln_front.exp() / a;

    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let clamp = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = one / clamp(one - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one / clamp(one + even * d);
        c = clamp(one + even / c);
        h = h * d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one / clamp(one + odd * d);
        c = clamp(one + odd / c);
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() <= eps {
            return Ok((front * h).min(one).max(T::zero()));
        }
    }
    Err(Error::Convergence(format!(
        "incomplete beta continued fraction at a={a}, b={b}, x={x}"
    )))
}

/// Beta density; `+inf` at a boundary where the shape makes it unbounded.
pub fn beta_pdf<T: Scalar>(a: T, b: T, x: T) -> Result<T> {
    check_shape(a, b)?;
    check_unit("x", x)?;
    let one = T::one();
    if x == T::zero() || x == one {
        let shape = if x == T::zero() { a } else { b };
        return Ok(if shape < one {
            T::infinity()
        } else if shape == one {
            (-ln_beta(a, b)).exp()
        } else {
            T::zero()
        });
    }
    Ok(((a - one) * x.ln() + (b - one) * (one - x).ln() - ln_beta(a, b)).exp())
}

/// Quantile function of a calibration distribution on [0, 1].
///
/// Only [`BetaDistribution`] ships; any distribution whose support can be
/// mapped onto the similarity range can implement this.
pub trait CalibrationDistribution<T: Scalar>: Send + Sync {
    fn icdf(&self, z: T) -> Result<T>;

    /// Identifies the distribution in cache keys and reports.
    fn key(&self) -> (u64, u64);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDistribution<T> {
    alpha: T,
    beta: T,
}

impl<T: Scalar> BetaDistribution<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        check_shape(alpha, beta)?;
        Ok(BetaDistribution { alpha, beta })
    }

    /// Symmetric Beta(a, a).
    pub fn symmetric(a: T) -> Result<Self> {
        Self::new(a, a)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn cdf(&self, x: T) -> Result<T> {
        regularized_incomplete_beta(self.alpha, self.beta, x)
    }

    pub fn pdf(&self, x: T) -> Result<T> {
        beta_pdf(self.alpha, self.beta, x)
    }

    pub fn icdf(&self, z: T) -> Result<T> {
        beta_icdf(self, z)
    }
}

impl Default for BetaDistribution<f64> {
    fn default() -> Self {
        BetaDistribution {
            alpha: 5.0,
            beta: 5.0,
        }
    }
}

impl<T: Scalar> CalibrationDistribution<T> for BetaDistribution<T> {
    fn icdf(&self, z: T) -> Result<T> {
        beta_icdf(self, z)
    }

    fn key(&self) -> (u64, u64) {
        (self.alpha.as_f64().to_bits(), self.beta.as_f64().to_bits())
    }
}

/// Inverse CDF of a beta distribution.
///
/// Bisection narrows the bracket to 1e-3, then safeguarded Newton steps
/// (falling back to bisection whenever a step leaves the bracket) polish the
/// root until the CDF residual is below the precision's solver tolerance.
pub fn beta_icdf<T: Scalar>(dist: &BetaDistribution<T>, z: T) -> Result<T> {
    check_unit("quantile", z)?;
    let (zero, one) = (T::zero(), T::one());
    if z == zero {
        return Ok(zero);
    }
    if z == one {
        return Ok(one);
    }
    let half = T::lit(0.5);
    let cdf = |x: T| dist.cdf(x);
    let mut lo = zero;
    let mut hi = one;
    let bracket = T::lit(ICDF_BRACKET);
    while hi - lo > bracket {
        let mid = half * (lo + hi);
        if cdf(mid)? < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let tol = T::solver_tol();
    let eps = T::epsilon();
    let mut x = half * (lo + hi);
    for _ in 0..ICDF_MAX_ITER {
        let resid = cdf(x)? - z;
        if resid == zero {
            return Ok(x);
        }
        if resid < zero {
            lo = x;
        } else {
            hi = x;
        }
        let dens = dist.pdf(x)?;
        let newton = x - resid / dens;
        let next = if dens > zero && dens.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            half * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= eps * x.abs().max(eps) || hi - lo <= eps * hi {
            break;
        }
    }
    let resid = (cdf(x)? - z).abs();
    if resid > tol {
        return Err(Error::Convergence(format!(
            "beta icdf at z={z}: residual {resid} after {ICDF_MAX_ITER} iterations"
        )));
    }
    Ok(x)
}

/// Affine map of a [0, 1] quantile value onto the cosine range [-1, 1].
pub fn icdf_to_similarity<T: Scalar>(u: T) -> Result<T> {
    check_unit("u", u)?;
    Ok(u + u - T::one())
}

/// Calibration targets in similarity space for a batch of `n` pairs:
/// `2·C((2i−1)/(2n)) − 1` for `i = 1..=n`.
pub fn calibration_targets<T: Scalar>(
    dist: &dyn CalibrationDistribution<T>,
    n: usize,
) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::Empty("calibration targets for zero pairs"));
    }
    let denom = T::from_usize_lossy(2 * n);
    (1..=n)
        .map(|i| {
            let z = T::from_usize_lossy(2 * i - 1) / denom;
            icdf_to_similarity(dist.icdf(z)?)
        })
        .collect()
}

type TargetKey = (usize, u64, u64);

/// Per-(pair count, distribution) cache of calibration targets.
///
/// Cheap to clone; clones share storage.
#[derive(Debug, Clone)]
pub struct TargetCache<T> {
    inner: Arc<RwLock<HashMap<TargetKey, Arc<[T]>>>>,
}

impl<T> Default for TargetCache<T> {
    fn default() -> Self {
        TargetCache {
            inner: Arc::new(RwLock::new(HashMap::new())),
        }
    }
}

impl<T: Scalar> TargetCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn targets(
        &self,
        dist: &dyn CalibrationDistribution<T>,
        n: usize,
    ) -> Result<Arc<[T]>> {
        let (ka, kb) = dist.key();
        let key = (n, ka, kb);
        if let Some(t) = self.inner.read().expect("target cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let computed: Arc<[T]> = calibration_targets(dist, n)?.into();
        let mut w = self.inner.write().expect("target cache poisoned");
        Ok(Arc::clone(w.entry(key).or_insert(computed)))
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("target cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Hamming distance law of two independent uniform K-bit codes: B(K, 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinomialBucketDistribution {
    k_bits: usize,
}

pub const MAX_BUCKET_BITS: usize = 128;

impl BinomialBucketDistribution {
    pub fn new(k_bits: usize) -> Result<Self> {
        if k_bits == 0 || k_bits > MAX_BUCKET_BITS {
            return Err(Error::Domain(format!(
                "code length {k_bits} outside 1..={MAX_BUCKET_BITS}"
            )));
        }
        Ok(BinomialBucketDistribution { k_bits })
    }

    pub fn k_bits(&self) -> usize {
        self.k_bits
    }

    /// C(K, d) as an exact integer.
    pub fn choose(&self, d: usize) -> u128 {
        binomial_coefficient(self.k_bits, d)
    }

    pub fn pmf(&self, d: usize) -> Result<f64> {
        binomial_bucket_pmf(self, d)
    }

    pub fn cdf(&self, d: usize) -> f64 {
        let d = d.min(self.k_bits);
        let total: u128 = (0..=d).map(|i| self.choose(i)).sum();
        scale_pow2(total, self.k_bits)
    }

    pub fn icdf(&self, z: f64) -> Result<usize> {
        binomial_bucket_icdf(self, z)
    }
}

/// Exact binomial coefficient; 0 when `d > k`.
pub fn binomial_coefficient(k: usize, d: usize) -> u128 {
    if d > k {
        return 0;
    }
    let d = d.min(k - d);
    let mut c: u128 = 1;
    for i in 0..d {
        // c·(k−i) is divisible by (i+1) after the multiply
        c = c * (k - i) as u128 / (i + 1) as u128;
    }
    c
}

fn scale_pow2(count: u128, k: usize) -> f64 {
    // count as f64 rounds only above 2^53; the power-of-two scaling is exact
    (count as f64) * 2f64.powi(-(k as i32))
}

/// P(D = d) = C(K, d) / 2^K.
pub fn binomial_bucket_pmf(dist: &BinomialBucketDistribution, d: usize) -> Result<f64> {
    if d > dist.k_bits {
        return Err(Error::Domain(format!(
            "distance {d} exceeds code length {}",
            dist.k_bits
        )));
    }
    Ok(scale_pow2(dist.choose(d), dist.k_bits))
}

/// Smallest d with P(D ≤ d) ≥ z.
pub fn binomial_bucket_icdf(dist: &BinomialBucketDistribution, z: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("quantile {z} outside [0, 1]")));
    }
    let mut acc: u128 = 0;
    for d in 0..dist.k_bits {
        acc += dist.choose(d);
        if dyadic_at_least(acc, dist.k_bits, z) {
            return Ok(d);
        }
    }
    Ok(dist.k_bits)
}

/// Exact test of `count / 2^k >= z` for finite `z >= 0`.
fn dyadic_at_least(count: u128, k: usize, z: f64) -> bool {
    if z == 0.0 {
        return true;
    }
    // z = mant · 2^exp exactly
    let (mant, exp, _) = num_traits::Float::integer_decode(z);
    let shift = exp as i64 + k as i64;
    let mant = mant as u128;
    if shift >= 0 {
        let lz = mant.leading_zeros() as i64;
        // mant << shift overflows u128, so it exceeds any count
        shift < lz && count >= mant << shift
    } else {
        let s = -shift;
        let needed = if s >= 128 { 1 } else { (mant + (1u128 << s) - 1) >> s };
        count >= needed
    }
}
