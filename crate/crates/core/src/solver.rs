//! ADMM solvers for low-rank plus fiber-sparse tensor decomposition.
//!
//! Both solvers minimize `Σ_i ‖X_(i)‖_* + λ R(E_(m))` subject to `B = X + E`
//! (full observation) or `B_Ω = (X + E)_Ω` (partial observation), where `m`
//! is the outlier mode and `R` is either the l₂,₁ norm (fiber sparsity) or
//! the entrywise l₁ norm (the baseline). The low-rank term is split into one
//! auxiliary copy `X_i` per mode, each tied to `X + E (+ O) = B` by its own
//! multiplier `Y_i`. Partial observation adds a compensation tensor `O` that
//! is free on unobserved entries and pinned to zero on observed ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::{l2, Matrix};
use crate::prox::{col_shrink_into, soft, svt_with, SvdBackend};
use crate::tensor::{check_mode, fold, unfold, DenseTensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Group sparsity over fibers of the outlier mode.
    #[default]
    L21,
    /// Entrywise sparsity (baseline).
    L1,
}

/// Order of the primal block updates inside one sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// `E`, then every `X_i`, then `O`, then the multipliers.
    #[default]
    OutliersFirst,
    /// Every `X_i`, then `E`, then `O`, then the multipliers.
    LowRankFirst,
}

/// Cutoff on fiber l₂ norms of `Ê` above which a fiber counts as an outlier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum OutlierThreshold {
    Absolute(f64),
    /// Multiple of the largest fiber norm of `Ê`.
    Relative(f64),
}

impl Default for OutlierThreshold {
    fn default() -> Self {
        OutlierThreshold::Relative(1e-6)
    }
}

impl OutlierThreshold {
    fn value(self) -> f64 {
        match self {
            OutlierThreshold::Absolute(v) | OutlierThreshold::Relative(v) => v,
        }
    }

    /// Absolute cutoff for a given `Ê`.
    pub fn resolve(self, e_hat: &DenseTensor, mode: usize) -> Result<f64> {
        match self {
            OutlierThreshold::Absolute(v) => Ok(v),
            OutlierThreshold::Relative(r) => Ok(r * fiber_norms(e_hat, mode)?.into_iter().fold(0.0, f64::max)),
        }
    }
}

/// How the initial penalty µ is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MuInit {
    /// `1.25 / ‖B_(m)‖₂` on the outlier-mode unfolding, paired with geometric
    /// growth (the inexact augmented Lagrangian schedule).
    #[default]
    Spectral,
    /// [`default_mu`]: `total / (4‖B‖₁)`, meant to be held constant.
    EntrySum,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub mu_init: MuInit,
    /// Factor applied to µ after each sweep; `1.0` keeps µ constant.
    pub mu_growth: f64,
    /// Upper bound for µ, as a multiple of the initial µ.
    pub mu_max_factor: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub outlier_threshold: OutlierThreshold,
    pub regularizer: Regularizer,
    /// Mode whose fibers may be corrupted (zero-based).
    pub outlier_mode: usize,
    pub update_order: UpdateOrder,
    pub svd_backend: SvdBackend,
}

pub const DEFAULT_EPSILON: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_MU_GROWTH: f64 = 1.5;
/// µ stops growing at this multiple of its initial value.
pub const DEFAULT_MU_MAX_FACTOR: f64 = 1e7;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu_init: MuInit::Spectral,
            mu_growth: DEFAULT_MU_GROWTH,
            mu_max_factor: DEFAULT_MU_MAX_FACTOR,
            epsilon: DEFAULT_EPSILON,
            max_iters: DEFAULT_MAX_ITERS,
            outlier_threshold: OutlierThreshold::default(),
            regularizer: Regularizer::L21,
            outlier_mode: 0,
            update_order: UpdateOrder::OutliersFirst,
            svd_backend: SvdBackend::Full,
        }
    }
}

impl SolverConfig {
    /// Constant µ from [`default_mu`] instead of the growing schedule.
    pub fn with_constant_mu(mut self) -> Self {
        self.mu_init = MuInit::EntrySum;
        self.mu_growth = 1.0;
        self
    }

    /// Defaults with λ set from the tensor shape: [`default_lambda`] for the
    /// l₂,₁ solver, [`default_lambda_l1`] for the baseline.
    pub fn for_shape(shape: &[usize], regularizer: Regularizer) -> Self {
        let lambda = match regularizer {
            Regularizer::L21 => default_lambda(shape),
            Regularizer::L1 => default_lambda_l1(shape),
        };
        Self {
            lambda,
            regularizer,
            ..Self::default()
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        if let MuInit::Value(mu) = self.mu_init {
            positive("mu", mu)?;
        }
        positive("epsilon", self.epsilon)?;
        if !(self.mu_growth.is_finite() && self.mu_growth >= 1.0) {
            return Err(Error::param(
                "mu_growth",
                format!("must be ≥ 1, got {}", self.mu_growth),
            ));
        }
        if !(self.mu_max_factor.is_finite() && self.mu_max_factor >= 1.0) {
            return Err(Error::param(
                "mu_max_factor",
                format!("must be ≥ 1, got {}", self.mu_max_factor),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        let t = self.outlier_threshold.value();
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::param(
                "outlier_threshold",
                format!("must be nonnegative, got {t}"),
            ));
        }
        check_mode(self.outlier_mode, order)
    }
}

/// `1 / (0.03 · max_n I_n)`.
pub fn default_lambda(shape: &[usize]) -> f64 {
    let largest = shape.iter().copied().max().unwrap_or(1) as f64;
    1.0 / (0.03 * largest)
}

/// `1 / sqrt(max_n I_n)`, the usual robust-PCA weight for the l₁ baseline.
pub fn default_lambda_l1(shape: &[usize]) -> f64 {
    let largest = shape.iter().copied().max().unwrap_or(1) as f64;
    1.0 / largest.sqrt()
}

/// `d₁·d₂ / (4‖B_(1)‖₁)`: the matrix robust-PCA penalty heuristic applied to
/// the mode-1 unfolding (whose size is the total entry count).
pub fn default_mu(b: &DenseTensor) -> f64 {
    let l1: f64 = b.data().iter().map(|x| x.abs()).sum();
    if l1 == 0.0 {
        return 1.0;
    }
    b.len() as f64 / (4.0 * l1)
}

/// `1.25 / ‖B_(mode)‖₂`.
pub fn spectral_mu(b: &DenseTensor, mode: usize) -> Result<f64> {
    let norm = spectral_norm(&unfold(b, mode)?)?;
    Ok(if norm == 0.0 { 1.0 } else { 1.25 / norm })
}

fn spectral_norm(m: &Matrix) -> Result<f64> {
    let a = m.as_faer();
    let gram = if m.rows() <= m.cols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let eig = gram
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    Ok(eig.into_iter().fold(0.0, f64::max).sqrt())
}

/// Iterates of one ADMM run, exposed to progress hooks.
#[derive(Clone, Debug)]
pub struct SolverState {
    /// One auxiliary low-rank copy per mode.
    pub x_i: Vec<DenseTensor>,
    pub e: DenseTensor,
    /// Compensation tensor; stays zero under full observation.
    pub o: DenseTensor,
    pub y_i: Vec<DenseTensor>,
    pub mu: f64,
    pub iteration: usize,
    /// Relative constraint violation `‖B − E − X̄ − O‖_F / ‖B‖_F` per sweep.
    pub residuals: Vec<f64>,
}

impl SolverState {
    /// `(1/N) Σ_i X_i`.
    pub fn x_mean(&self) -> DenseTensor {
        let n = self.x_i.len() as f64;
        let mut acc = vec![0.0; self.e.len()];
        for x in &self.x_i {
            for (a, &v) in acc.iter_mut().zip(x.data()) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        DenseTensor::from_raw(self.e.shape().to_vec(), acc)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverResult {
    /// Averaged low-rank estimate with detected outlier fibers set to zero.
    #[serde(skip)]
    pub x_hat: Option<DenseTensor>,
    #[serde(skip)]
    pub e_hat: Option<DenseTensor>,
    /// Compensation tensor (zero under full observation).
    #[serde(skip)]
    pub o_hat: Option<DenseTensor>,
    /// Sorted zero-based column indices of the outlier-mode unfolding.
    pub outlier_fibers: Vec<usize>,
    pub fiber_count: usize,
    pub threshold: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub residuals: Vec<f64>,
    pub lambda: f64,
    pub mu_initial: f64,
    pub mu_final: f64,
    pub regularizer: Regularizer,
    pub outlier_mode: usize,
}

impl SolverResult {
    pub fn x_hat(&self) -> &DenseTensor {
        self.x_hat.as_ref().expect("x_hat is populated by the solvers")
    }

    pub fn e_hat(&self) -> &DenseTensor {
        self.e_hat.as_ref().expect("e_hat is populated by the solvers")
    }

    pub fn o_hat(&self) -> &DenseTensor {
        self.o_hat.as_ref().expect("o_hat is populated by the solvers")
    }

    /// Fraction of outlier-mode fibers flagged.
    pub fn corruption_ratio(&self) -> f64 {
        self.outlier_fibers.len() as f64 / self.fiber_count as f64
    }
}

/// Full-observation solver.
pub fn horpca_fiber(b: &DenseTensor, cfg: &SolverConfig) -> Result<SolverResult> {
    solve(b, None, cfg, &mut |_| {})
}

/// Partial-observation solver. Entries of `b` outside `mask` are ignored.
pub fn robust_completion(b: &DenseTensor, mask: &ObservationMask, cfg: &SolverConfig) -> Result<SolverResult> {
    solve(b, Some(mask), cfg, &mut |_| {})
}

/// Shared driver. `hook` sees the state after every sweep.
pub fn solve(
    b: &DenseTensor,
    mask: Option<&ObservationMask>,
    cfg: &SolverConfig,
    hook: &mut dyn FnMut(&SolverState),
) -> Result<SolverResult> {
    cfg.validate(b.order())?;
    let b = match mask {
        Some(m) => {
            if m.observed_count() == 0 {
                return Err(Error::param("mask", "no entry is observed"));
            }
            m.apply(b)?
        }
        None => b.clone(),
    };
    // a full mask behaves exactly like no mask
    let unobserved: Option<&[bool]> = mask.filter(|m| !m.is_full()).map(|m| m.as_slice());

    let shape = b.shape().to_vec();
    let order = b.order();
    let nf = order as f64;
    let len = b.len();
    let mode = cfg.outlier_mode;
    let fiber_count = len / shape[mode];
    let mu0 = match cfg.mu_init {
        MuInit::Spectral => spectral_mu(&b, mode)?,
        MuInit::EntrySum => default_mu(&b),
        MuInit::Value(v) => v,
    };
    let mu_max = mu0 * cfg.mu_max_factor;
    let b_norm = b.frob_norm();

    let zeros = DenseTensor::from_raw(shape.clone(), vec![0.0; len]);
    let mut st = SolverState {
        x_i: vec![zeros.clone(); order],
        e: zeros.clone(),
        o: zeros.clone(),
        y_i: vec![zeros.clone(); order],
        mu: mu0,
        iteration: 0,
        residuals: Vec::new(),
    };

    let mut converged = b_norm == 0.0;
    let mut scratch = vec![0.0; len];
    while !converged && st.iteration < cfg.max_iters {
        match cfg.update_order {
            UpdateOrder::OutliersFirst => {
                update_e(&b, &mut st, cfg, &mut scratch)?;
                update_x(&b, &mut st, cfg.svd_backend, &mut scratch)?;
            }
            UpdateOrder::LowRankFirst => {
                update_x(&b, &mut st, cfg.svd_backend, &mut scratch)?;
                update_e(&b, &mut st, cfg, &mut scratch)?;
            }
        }
        if let Some(unobs) = unobserved {
            update_o(&b, &mut st, unobs);
        }
        // multipliers and residual
        let mu = st.mu;
        let bd = b.data();
        let ed = st.e.data();
        let od = st.o.data();
        let mut xbar = vec![0.0; len];
        for (x, y) in st.x_i.iter().zip(st.y_i.iter_mut()) {
            let xd = x.data();
            for (l, yv) in y.data_mut().iter_mut().enumerate() {
                *yv += mu * (bd[l] - xd[l] - ed[l] - od[l]);
                xbar[l] += xd[l] / nf;
            }
        }
        let res: f64 = (0..len)
            .map(|l| {
                let r = bd[l] - ed[l] - xbar[l] - od[l];
                r * r
            })
            .sum::<f64>()
            .sqrt()
            / b_norm;
        if !res.is_finite() {
            return Err(Error::Numerical(format!(
                "residual became {res} at iteration {}",
                st.iteration + 1
            )));
        }
        st.residuals.push(res);
        st.iteration += 1;
        converged = res <= cfg.epsilon;
        hook(&st);
        st.mu = (st.mu * cfg.mu_growth).min(mu_max);
    }

    let e_hat = st.e.clone();
    let threshold = cfg.outlier_threshold.resolve(&e_hat, mode)?;
    let outlier_fibers = detect_outliers(&e_hat, mode, threshold)?;
    let mut x_hat = st.x_mean();
    zero_fibers(&mut x_hat, mode, &outlier_fibers)?;
    Ok(SolverResult {
        x_hat: Some(x_hat),
        e_hat: Some(e_hat),
        o_hat: Some(st.o),
        outlier_fibers,
        fiber_count,
        threshold,
        iterations: st.iteration,
        final_residual: st.residuals.last().copied().unwrap_or(0.0),
        converged,
        residuals: st.residuals,
        lambda: cfg.lambda,
        mu_initial: mu0,
        mu_final: st.mu,
        regularizer: cfg.regularizer,
        outlier_mode: mode,
    })
}

/// `E ← prox_{λ/(µN) R}(C)` with `C = (1/N) Σ_i (Y_i/µ + B − X_i) − O`.
fn update_e(b: &DenseTensor, st: &mut SolverState, cfg: &SolverConfig, c: &mut [f64]) -> Result<()> {
    let n = st.x_i.len() as f64;
    let inv_mu = 1.0 / st.mu;
    let bd = b.data();
    let od = st.o.data();
    c.fill(0.0);
    for (x, y) in st.x_i.iter().zip(&st.y_i) {
        for (l, (&xv, &yv)) in x.data().iter().zip(y.data()).enumerate() {
            c[l] += yv * inv_mu - xv;
        }
    }
    for (l, cv) in c.iter_mut().enumerate() {
        *cv = *cv / n + bd[l] - od[l];
    }
    let kappa = cfg.lambda * inv_mu / n;
    match cfg.regularizer {
        Regularizer::L1 => {
            for (e, &cv) in st.e.data_mut().iter_mut().zip(c.iter()) {
                *e = soft(cv, kappa);
            }
        }
        Regularizer::L21 => {
            let mode = cfg.outlier_mode;
            let rows = b.shape()[mode];
            if mode == 0 {
                col_shrink_into(c, rows, kappa, st.e.data_mut());
            } else {
                let ct = DenseTensor::from_raw(b.shape().to_vec(), c.to_vec());
                let cm = unfold(&ct, mode)?;
                let mut em = Matrix::zeros(cm.rows(), cm.cols());
                col_shrink_into(cm.data(), rows, kappa, em.data_mut());
                st.e = fold(&em, mode, b.shape())?;
            }
        }
    }
    Ok(())
}

/// `X_i ← fold_i(SVT_{1/µ}((B + Y_i/µ − E − O)_(i)))` for every mode `i`.
fn update_x(b: &DenseTensor, st: &mut SolverState, backend: SvdBackend, t: &mut [f64]) -> Result<()> {
    let inv_mu = 1.0 / st.mu;
    let bd = b.data();
    let ed = st.e.data();
    let od = st.o.data();
    for i in 0..st.x_i.len() {
        for (l, (tv, &yv)) in t.iter_mut().zip(st.y_i[i].data()).enumerate() {
            *tv = bd[l] + yv * inv_mu - ed[l] - od[l];
        }
        let ti = DenseTensor::from_raw(b.shape().to_vec(), t.to_vec());
        let m = unfold(&ti, i)?;
        let shrunk = svt_with(&m, inv_mu, backend)?;
        st.x_i[i] = fold(&shrunk, i, b.shape())?;
    }
    Ok(())
}

/// `O ← (1/N) Σ_i (Y_i/µ + B − X_i − E)` off the observed set, zero on it.
fn update_o(b: &DenseTensor, st: &mut SolverState, observed: &[bool]) {
    let n = st.x_i.len() as f64;
    let inv_mu = 1.0 / st.mu;
    let bd = b.data();
    let ed = st.e.data();
    let mut acc = vec![0.0; b.len()];
    for (x, y) in st.x_i.iter().zip(&st.y_i) {
        for (l, (&xv, &yv)) in x.data().iter().zip(y.data()).enumerate() {
            acc[l] += yv * inv_mu - xv;
        }
    }
    for (l, o) in st.o.data_mut().iter_mut().enumerate() {
        *o = if observed[l] { 0.0 } else { acc[l] / n + bd[l] - ed[l] };
    }
}

/// l₂ norm of every column of the mode-`mode` unfolding.
pub fn fiber_norms(t: &DenseTensor, mode: usize) -> Result<Vec<f64>> {
    check_mode(mode, t.order())?;
    if mode == 0 {
        return Ok(t.data().chunks_exact(t.shape()[0]).map(l2).collect());
    }
    let m = unfold(t, mode)?;
    Ok(m.data().chunks_exact(m.rows()).map(l2).collect())
}

/// Columns of the mode-`mode` unfolding of `e_hat` whose l₂ norm exceeds
/// `threshold`, ascending.
pub fn detect_outliers(e_hat: &DenseTensor, mode: usize, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::param(
            "threshold",
            format!("must be nonnegative, got {threshold}"),
        ));
    }
    Ok(fiber_norms(e_hat, mode)?
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > threshold)
        .map(|(j, _)| j)
        .collect())
}

/// Sets the listed mode-`mode` fibers of `t` to zero.
pub fn zero_fibers(t: &mut DenseTensor, mode: usize, fibers: &[usize]) -> Result<()> {
    check_mode(mode, t.order())?;
    if fibers.is_empty() {
        return Ok(());
    }
    let shape = t.shape().to_vec();
    let left: usize = shape[..mode].iter().product();
    let dim = shape[mode];
    let count = t.len() / dim;
    let data = t.data_mut();
    for &j in fibers {
        if j >= count {
            return Err(Error::param("fibers", format!("fiber {j} out of range (< {count})")));
        }
        let (a, bb) = (j % left, j / left);
        let base = a + bb * left * dim;
        for i in 0..dim {
            data[base + i * left] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_defaults() {
        assert!((default_lambda(&[70, 70, 70]) - 1.0 / 2.1).abs() < 1e-15);
        assert!((default_lambda(&[100, 10, 10]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((default_lambda(&[556, 168, 17]) - 1.0 / 16.68).abs() < 1e-15);
        assert!((default_lambda(&[556, 168, 17]) - 0.05995).abs() < 1e-5);
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::for_shape(&[4, 4, 4], Regularizer::L21);
        assert!(ok.validate(3).is_ok());
        let bad = |f: fn(&mut SolverConfig)| {
            let mut c = ok.clone();
            f(&mut c);
            c.validate(3).is_err()
        };
        assert!(bad(|c| c.lambda = 0.0));
        assert!(bad(|c| c.mu_init = MuInit::Value(-1.0)));
        assert!(bad(|c| c.epsilon = 0.0));
        assert!(bad(|c| c.max_iters = 0));
        assert!(bad(|c| c.outlier_mode = 3));
        assert!(bad(|c| c.mu_growth = 0.5));
        assert!(bad(|c| c.outlier_threshold = OutlierThreshold::Absolute(-1.0)));
    }

    #[test]
    fn detect_outliers_basic() {
        let z = DenseTensor::zeros(&[3, 2, 2]).unwrap();
        assert!(detect_outliers(&z, 0, 0.0).unwrap().is_empty());
        let mut e = z.clone();
        // fiber (·, 1, 1) → column 3, norm 1
        e.data_mut()[3 * 3 + 1] = 1.0;
        assert_eq!(detect_outliers(&e, 0, 0.5).unwrap(), vec![3]);
        assert!(detect_outliers(&e, 0, 1.0).unwrap().is_empty());
        assert!(detect_outliers(&e, 0, -1.0).is_err());
    }

    #[test]
    fn zero_fibers_matches_unfolding_columns() {
        let t = DenseTensor::from_fn(&[3, 4, 2], |ix| (1 + ix[0] + 3 * ix[1] + 12 * ix[2]) as f64).unwrap();
        for mode in 0..3 {
            let mut z = t.clone();
            zero_fibers(&mut z, mode, &[1, 4]).unwrap();
            let m = unfold(&z, mode).unwrap();
            let orig = unfold(&t, mode).unwrap();
            for j in 0..m.cols() {
                if j == 1 || j == 4 {
                    assert!(m.col(j).iter().all(|&x| x == 0.0));
                } else {
                    assert_eq!(m.col(j), orig.col(j));
                }
            }
        }
    }

    #[test]
    fn zero_input_converges_immediately() {
        let b = DenseTensor::zeros(&[3, 3, 3]).unwrap();
        let r = horpca_fiber(&b, &SolverConfig::for_shape(b.shape(), Regularizer::L21)).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert!(r.outlier_fibers.is_empty());
    }

    #[test]
    fn empty_mask_rejected() {
        let b = DenseTensor::zeros(&[2, 2, 2]).unwrap();
        let m = ObservationMask::new(vec![2, 2, 2], vec![false; 8]).unwrap();
        let cfg = SolverConfig::for_shape(b.shape(), Regularizer::L21);
        assert!(robust_completion(&b, &m, &cfg).is_err());
        let wrong = ObservationMask::full(&[2, 2, 3]).unwrap();
        assert!(robust_completion(&b, &wrong, &cfg).is_err());
    }
}
