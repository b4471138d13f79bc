//! Classic unsupervised hashing baselines: ITQ and random-hyperplane LSH.
//!
//! Deep similarity-preserving baselines are trained through
//! [`crate::trainer`] with [`crate::trainer::PairObjective::Preservation`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash_model::{gaussian_matrix, pack_signs, HashModel, PackedCodes};
use crate::linalg::{matmul, matmul_tn, Matrix};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, stream_seed, Stream};

/// Centering, top-K PCA projection and a learned orthogonal rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ItqModel {
    mean: Vec<f64>,
    pca: Matrix<f64>,
    rotation: Matrix<f64>,
}

impl ItqModel {
    pub fn from_parts(mean: Vec<f64>, pca: Matrix<f64>, rotation: Matrix<f64>) -> Result<Self> {
        if pca.rows() != mean.len() {
            return Err(Error::shape("ItqModel", mean.len(), pca.rows()));
        }
        if rotation.shape() != (pca.cols(), pca.cols()) {
            return Err(Error::shape(
                "ItqModel rotation",
                format!("{0}x{0}", pca.cols()),
                format!("{}x{}", rotation.rows(), rotation.cols()),
            ));
        }
        Ok(ItqModel {
            mean,
            pca,
            rotation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k_bits(&self) -> usize {
        self.pca.cols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn pca(&self) -> &Matrix<f64> {
        &self.pca
    }

    pub fn rotation(&self) -> &Matrix<f64> {
        &self.rotation
    }

    /// `(x − mean)·pca`, the PCA coordinates before rotation.
    pub fn project<T: Scalar>(&self, x: &Matrix<T>) -> Result<Matrix<f64>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("ItqModel::project", self.input_dim(), x.cols()));
        }
        let centered = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)].as_f64() - self.mean[j]);
        matmul(&centered, &self.pca)
    }
}

/// `max |RᵀR − I|`.
pub fn orthogonality_error(r: &Matrix<f64>) -> f64 {
    let rtr = matmul_tn(r, r).expect("square matrix");
    rtr.max_abs_diff(&Matrix::identity(r.cols()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankPolicy {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItqOptions {
    pub iters: usize,
    pub seed: u64,
    pub on_rank_deficient: RankPolicy,
}

impl Default for ItqOptions {
    fn default() -> Self {
        ItqOptions {
            iters: 50,
            seed: 0,
            on_rank_deficient: RankPolicy::Error,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ItqFit {
    pub model: ItqModel,
    /// `‖B − VR‖²` at the initial rotation and after every iteration. The
    /// alternation only guarantees a local minimum; the random start decides
    /// which one.
    pub objective: Vec<f64>,
    /// `max |RᵀR − I|` at the same points.
    pub orthogonality: Vec<f64>,
}

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn quantization_error(v: &Matrix<f64>, r: &Matrix<f64>) -> Result<(Matrix<f64>, f64)> {
    let vr = matmul(v, r)?;
    let b = vr.map(|x| if x >= 0.0 { 1.0 } else { -1.0 });
    let err = b.sub(&vr)?.frobenius_sq();
    Ok((b, err))
}

fn random_rotation(k: usize, seed: u64) -> Matrix<f64> {
    let mut rng = stream_rng(seed, Stream::Rotation);
    let g = DMatrix::from_fn(k, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    from_na(&q)
}

/// Top-`k` eigenvectors of the feature covariance, as columns.
fn pca_basis(centered: &Matrix<f64>, k: usize, policy: RankPolicy) -> Result<Matrix<f64>> {
    let n = centered.rows();
    let cov = matmul_tn(centered, centered)?.scale(1.0 / (n as f64 - 1.0));
    let eig = SymmetricEigen::new(to_na(&cov));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kth = eig.eigenvalues[order[k - 1]];
    if !(kth > 1e-10 * top) {
        let msg = format!("eigenvalue {k} is {kth:e} against a leading {top:e}");
        match policy {
            RankPolicy::Error => return Err(Error::RankDeficient(msg)),
            RankPolicy::Warn => log::warn!("ITQ: {msg}; continuing with a degenerate basis"),
        }
    }
    let d = centered.cols();
    let mut basis = Matrix::zeros(d, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        // sign-canonical: largest-magnitude entry positive
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let s = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            basis[(r, c)] = s * v[r];
        }
    }
    Ok(basis)
}

/// Alternates `B = sign(VR)` with the orthogonal Procrustes update of `R`,
/// recording the objective and orthogonality at the start and after each round.
pub(crate) fn refine_rotation(
    v: &Matrix<f64>,
    mut rotation: Matrix<f64>,
    iters: usize,
) -> Result<(Matrix<f64>, Vec<f64>, Vec<f64>)> {
    let (mut b, err) = quantization_error(v, &rotation)?;
    let mut objective = vec![err];
    let mut orthogonality = vec![orthogonality_error(&rotation)];
    for _ in 0..iters {
        // maximize tr(BᵀVR): Bᵀ V = U Σ Wᵀ  ⇒  R = W Uᵀ
        let m = to_na(&matmul_tn(&b, v)?);
        let svd = m.svd(true, true);
        let (u, vt) = (
            svd.u.ok_or_else(|| Error::Convergence("ITQ SVD: no U".into()))?,
            svd.v_t.ok_or_else(|| Error::Convergence("ITQ SVD: no Vᵀ".into()))?,
        );
        rotation = from_na(&(vt.transpose() * u.transpose()));
        let (nb, err) = quantization_error(v, &rotation)?;
        b = nb;
        objective.push(err);
        orthogonality.push(orthogonality_error(&rotation));
    }
    Ok((rotation, objective, orthogonality))
}

/// Iterative quantization.
///
/// Centers the data, projects onto the top-`k` principal directions, then
/// alternates `B = sign(VR)` with the orthogonal Procrustes update of `R`.
pub fn fit_itq<T: Scalar>(x: &Matrix<T>, k: usize, opts: &ItqOptions) -> Result<ItqFit> {
    let (n, d) = x.shape();
    if k == 0 || n <= k || d < k {
        return Err(Error::Config(format!(
            "ITQ needs 1 <= K <= d and n > K, got n={n}, d={d}, K={k}"
        )));
    }
    let mut mean = vec![0.0; d];
    for r in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = Matrix::from_fn(n, d, |i, j| x[(i, j)].as_f64() - mean[j]);
    let pca = pca_basis(&centered, k, opts.on_rank_deficient)?;
    let v = matmul(&centered, &pca)?;

    let (rotation, objective, orthogonality) = refine_rotation(&v, random_rotation(k, opts.seed), opts.iters)?;
    Ok(ItqFit {
        model: ItqModel {
            mean,
            pca,
            rotation,
        },
        objective,
        orthogonality,
    })
}

pub fn encode_itq<T: Scalar>(model: &ItqModel, x: &Matrix<T>) -> Result<PackedCodes> {
    let v = model.project(x)?;
    Ok(pack_signs(&matmul(&v, &model.rotation)?))
}

/// Random Gaussian hyperplanes through the origin.
pub fn fit_lsh<T: Scalar>(d: usize, k: usize, seed: u64) -> Result<HashModel<T>> {
    if d == 0 || k == 0 {
        return Err(Error::Config(format!("LSH needs d, K >= 1, got d={d}, K={k}")));
    }
    HashModel::new(
        gaussian_matrix(d, k, 1.0, stream_seed(seed, Stream::Hyperplanes)),
        vec![T::zero(); k],
    )
}
