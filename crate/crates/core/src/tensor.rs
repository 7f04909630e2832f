//! Dense N-way tensors and the multilinear primitives the solvers use.
//!
//! # Layout
//!
//! Data is stored with the **first index varying fastest** (generalized
//! column-major). For shape `(I₁, …, I_N)` the entry `(i₁, …, i_N)` (all
//! zero-based) lives at `Σ_k i_k · S_k` with `S_k = Π_{m<k} I_m`.
//!
//! The mode-`n` unfolding is the `I_n × Π_{m≠n} I_m` matrix whose columns are
//! the mode-`n` fibers. Fiber `(i_k)_{k≠n}` becomes column
//! `j = Σ_{k≠n} i_k · J_k` with `J_k = Π_{m<k, m≠n} I_m`, i.e. the remaining
//! indices keep the same first-fastest order. With this convention the mode-0
//! unfolding is the raw data buffer read as a column-major matrix.
//!
//! Modes are zero-based throughout the crate.

use crate::error::{Error, Result};
use crate::matrix::{check_finite, l2, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Element count of a tensor of this shape, checking every dimension is
/// positive and the product fits in `usize`.
pub fn element_count(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "a tensor needs at least one dimension".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "every dimension must be positive".into(),
        });
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "element count overflows usize".into(),
        })
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = element_count(&shape)?;
        if data.len() != len {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {len} entries, got {}", data.len()),
            });
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = element_count(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = element_count(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, shape);
        }
        Self::new(shape.to_vec(), data)
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of mode-`mode` fibers, i.e. columns of the mode-`mode` unfolding.
    pub fn fiber_count(&self, mode: usize) -> Result<usize> {
        check_mode(mode, self.order())?;
        Ok(self.len() / self.shape[mode])
    }

    pub fn linear_index(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.order() {
            return None;
        }
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            lin += i * stride;
            stride *= d;
        }
        Some(lin)
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&d| {
                let i = lin % d;
                lin /= d;
                i
            })
            .collect()
    }

    pub fn get(&self, idx: &[usize]) -> Option<f64> {
        self.linear_index(idx).map(|l| self.data[l])
    }

    pub fn frob_norm(&self) -> f64 {
        frob_norm(self)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.shape.clone(), self.data.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn zip_map(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_shape(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.shape.clone(), data)
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

pub(crate) fn check_mode(mode: usize, order: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    Ok(())
}

pub(crate) fn same_shape(a: &DenseTensor, b: &DenseTensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            expected: a.shape.clone(),
            found: b.shape.clone(),
        });
    }
    Ok(())
}

/// `(left, dim, right)` where `left = Π_{m<mode} I_m` and `right = Π_{m>mode} I_m`.
fn split(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = shape[..mode].iter().product();
    let right = shape[mode + 1..].iter().product();
    (left, shape[mode], right)
}

/// Column of the mode-`mode` unfolding that holds the fiber through `idx`
/// (the entry `idx[mode]` is ignored).
pub fn unfolding_column(shape: &[usize], mode: usize, idx: &[usize]) -> usize {
    let mut col = 0;
    let mut stride = 1;
    for (k, (&i, &d)) in idx.iter().zip(shape).enumerate() {
        if k == mode {
            continue;
        }
        col += i * stride;
        stride *= d;
    }
    col
}

/// Inverse of [`unfolding_column`]: the multi-index of the fiber's first entry
/// (with position `mode` set to zero).
pub fn fiber_index(shape: &[usize], mode: usize, mut col: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            if k == mode {
                0
            } else {
                let i = col % d;
                col /= d;
                i
            }
        })
        .collect()
}

/// Mode-`mode` unfolding: an `I_mode × Π_{m≠mode} I_m` matrix of fibers.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(mode, t.order())?;
    let (left, dim, right) = split(&t.shape, mode);
    let cols = left * right;
    if mode == 0 {
        return Ok(Matrix::from_raw(dim, cols, t.data.clone()));
    }
    let mut out = vec![0.0; t.len()];
    let src = &t.data;
    for b in 0..right {
        for i in 0..dim {
            let base = i * left + b * left * dim;
            for a in 0..left {
                out[i + (a + b * left) * dim] = src[base + a];
            }
        }
    }
    Ok(Matrix::from_raw(dim, cols, out))
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    let len = element_count(shape)?;
    check_mode(mode, shape.len())?;
    let (left, dim, right) = split(shape, mode);
    if m.rows() != dim || m.cols() != left * right {
        return Err(Error::ShapeMismatch {
            expected: vec![dim, left * right],
            found: vec![m.rows(), m.cols()],
        });
    }
    if mode == 0 {
        return Ok(DenseTensor::from_raw(shape.to_vec(), m.data().to_vec()));
    }
    let mut out = vec![0.0; len];
    let src = m.data();
    for b in 0..right {
        for i in 0..dim {
            let base = i * left + b * left * dim;
            for a in 0..left {
                out[base + a] = src[i + (a + b * left) * dim];
            }
        }
    }
    Ok(DenseTensor::from_raw(shape.to_vec(), out))
}

/// `t ×_mode a`: multiplies every mode-`mode` fiber by `a`.
pub fn mode_n_product(t: &DenseTensor, a: &Matrix, mode: usize) -> Result<DenseTensor> {
    check_mode(mode, t.order())?;
    if a.cols() != t.shape[mode] {
        return Err(Error::ShapeMismatch {
            expected: vec![a.rows(), t.shape[mode]],
            found: vec![a.rows(), a.cols()],
        });
    }
    let prod = a.matmul(&unfold(t, mode)?)?;
    let mut shape = t.shape.clone();
    shape[mode] = a.rows();
    fold(&prod, mode, &shape)
}

pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    same_shape(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

pub fn frob_norm(t: &DenseTensor) -> f64 {
    l2(&t.data)
}

/// Core tensor plus one factor matrix per mode.
#[derive(Clone, Debug)]
pub struct TuckerFactors {
    core: DenseTensor,
    factors: Vec<Matrix>,
}

const ORTHONORMAL_TOL: f64 = 1e-10;

impl TuckerFactors {
    /// Checks that factor `n` is `I_n × c_n` with orthonormal columns and that
    /// the core is `c_1 × … × c_N`.
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::param(
                "factors",
                format!("expected {} factor matrices, got {}", core.order(), factors.len()),
            ));
        }
        for (n, u) in factors.iter().enumerate() {
            if u.cols() != core.shape()[n] {
                return Err(Error::ShapeMismatch {
                    expected: vec![u.rows(), core.shape()[n]],
                    found: vec![u.rows(), u.cols()],
                });
            }
            let gram = u.transpose().matmul(u)?;
            let dev = gram.sub(&Matrix::identity(u.cols()))?.frob_norm();
            if dev > ORTHONORMAL_TOL {
                return Err(Error::param(
                    "factors",
                    format!("factor {n} is not orthonormal (‖UᵀU − I‖_F = {dev:.3e})"),
                ));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    /// Shape `(I_1, …, I_N)` of the composed tensor.
    pub fn full_shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    /// Multilinear rank bound `(c_1, …, c_N)`.
    pub fn rank(&self) -> &[usize] {
        self.core.shape()
    }
}

/// `G ×₁ U⁽¹⁾ ×₂ U⁽²⁾ … ×_N U⁽ᴺ⁾`.
pub fn tucker_compose(f: &TuckerFactors) -> Result<DenseTensor> {
    f.factors
        .iter()
        .enumerate()
        .try_fold(f.core.clone(), |acc, (n, u)| mode_n_product(&acc, u, n))
}
