//! Closed-form proximal operators used by the ADMM updates.
//!
//! * [`svt`]: prox of `τ‖·‖_*` (singular value soft-thresholding).
//! * [`col_shrink`]: prox of `κ‖·‖₂,₁` (column-wise group shrinkage).
//! * [`l1_shrink`]: prox of `κ‖·‖₁` (entrywise soft-thresholding).

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{l2, Matrix};

/// Relative cutoff under which singular values count as zero when reporting ranks.
pub const RANK_REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self, rel_tol: f64) -> usize {
        numerical_rank(&self.singular_values, rel_tol)
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        let rows = us.rows();
        for (j, &s) in self.singular_values.iter().enumerate() {
            for x in &mut us.data_mut()[j * rows..(j + 1) * rows] {
                *x *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("conformable by construction")
    }
}

/// Count of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Thin SVD: `u` is `m × k`, `v` is `n × k` with `k = min(m, n)`.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    let dec = m
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = dec.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = dec.U();
    let v = dec.V();
    let u = Mat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v = Mat::from_fn(v.nrows(), order.len(), |i, j| v[(i, order[j])]);
    Ok(SvdResult {
        u: Matrix::from_faer(u.as_ref()),
        singular_values: order.iter().map(|&k| s[k].max(0.0)).collect(),
        v: Matrix::from_faer(v.as_ref()),
    })
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.singular_values.iter().sum())
}

/// How [`svt_with`] obtains the leading singular subspace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdBackend {
    /// Full thin SVD of the matrix.
    #[default]
    Full,
    /// Eigen-decomposition of the smaller Gram matrix (`AAᵀ` or `AᵀA`). Much
    /// faster for the very wide unfoldings the solvers produce; accurate for
    /// every singular value well above `sqrt(ε)·σ_max`, which is all the
    /// thresholding keeps in practice.
    Gram,
}

fn check_threshold(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(name, format!("must be a positive finite number, got {v}")));
    }
    Ok(())
}

/// `U · diag(max(σ − τ, 0)) · Vᵀ`, the minimizer of `τ‖X‖_* + ½‖X − m‖_F²`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    svt_with(m, tau, SvdBackend::Full)
}

pub fn svt_with(m: &Matrix, tau: f64, backend: SvdBackend) -> Result<Matrix> {
    check_threshold("tau", tau)?;
    match backend {
        SvdBackend::Full => svt_full(m, tau),
        SvdBackend::Gram => svt_gram(m, tau),
    }
}

fn svt_full(m: &Matrix, tau: f64) -> Result<Matrix> {
    let dec = m
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = dec.S().column_vector();
    let keep: Vec<usize> = (0..s.nrows()).filter(|&k| s[k] > tau).collect();
    if keep.is_empty() {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let u = dec.U();
    let v = dec.V();
    let us = Mat::from_fn(m.rows(), keep.len(), |i, j| u[(i, keep[j])] * (s[keep[j]] - tau));
    let vk = Mat::from_fn(m.cols(), keep.len(), |i, j| v[(i, keep[j])]);
    let out = &us * vk.transpose();
    Ok(Matrix::from_faer(out.as_ref()))
}

fn svt_gram(m: &Matrix, tau: f64) -> Result<Matrix> {
    let a = m.as_faer();
    let wide = m.rows() <= m.cols();
    let gram = if wide { a * a.transpose() } else { a.transpose() * a };
    let eig = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    let lambda = eig.S().column_vector();
    let vecs = eig.U();
    let keep: Vec<(usize, f64)> = (0..lambda.nrows())
        .filter_map(|k| {
            let sigma = lambda[k].max(0.0).sqrt();
            (sigma > tau).then(|| (k, (sigma - tau) / sigma))
        })
        .collect();
    if keep.is_empty() {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let basis = Mat::from_fn(vecs.nrows(), keep.len(), |i, j| vecs[(i, keep[j].0)]);
    let scaled = Mat::from_fn(vecs.nrows(), keep.len(), |i, j| vecs[(i, keep[j].0)] * keep[j].1);
    let out = if wide {
        // U diag(f) (Uᵀ A)
        let proj = basis.transpose() * a;
        &scaled * &proj
    } else {
        // (A V diag(f)) Vᵀ
        let av = a * &scaled;
        &av * basis.transpose()
    };
    Ok(Matrix::from_faer(out.as_ref()))
}

/// Column-wise shrinkage: column `j` becomes `m_j · max(0, 1 − κ/‖m_j‖₂)`.
///
/// Columns with `‖m_j‖₂ ≤ κ` come out as exact zeros. This is the minimizer of
/// `κ‖E‖₂,₁ + ½‖E − m‖_F²`.
pub fn col_shrink(m: &Matrix, kappa: f64) -> Result<Matrix> {
    check_threshold("kappa", kappa)?;
    let mut out = vec![0.0; m.data().len()];
    col_shrink_into(m.data(), m.rows(), kappa, &mut out);
    Ok(Matrix::from_raw(m.rows(), m.cols(), out))
}

/// Writes the column shrinkage of the column-major `src` into `dst`, which
/// must already be zeroed or be overwritten entirely by the caller's contract:
/// shrunk-away columns are set to zero explicitly.
pub(crate) fn col_shrink_into(src: &[f64], rows: usize, kappa: f64, dst: &mut [f64]) {
    for (s, d) in src.chunks_exact(rows).zip(dst.chunks_exact_mut(rows)) {
        let norm = l2(s);
        if norm <= kappa {
            d.fill(0.0);
        } else {
            let f = 1.0 - kappa / norm;
            for (o, &x) in d.iter_mut().zip(s) {
                *o = x * f;
            }
        }
    }
}

/// Entrywise soft-threshold `sign(x)·max(|x| − κ, 0)`.
pub fn l1_shrink(m: &Matrix, kappa: f64) -> Result<Matrix> {
    check_threshold("kappa", kappa)?;
    let data = m.data().iter().map(|&x| soft(x, kappa)).collect();
    Ok(Matrix::from_raw(m.rows(), m.cols(), data))
}

#[inline]
pub(crate) fn soft(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

/// Sum of column l₂ norms.
pub fn l21_norm(m: &Matrix) -> f64 {
    m.data().chunks_exact(m.rows()).map(l2).sum()
}
