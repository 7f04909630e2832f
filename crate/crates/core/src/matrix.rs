//! Dense column-major matrices.
//!
//! This is deliberately small: the solvers only need storage, column access,
//! products and a bridge into `faer` for the SVD.

use faer::MatRef;

use crate::error::{Error, Result};

/// Dense real matrix stored column-major: entry `(i, j)` lives at
/// `data[i + j * rows]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape {
                shape: vec![rows, cols],
                reason: "matrix dimensions must be positive".into(),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape {
                shape: vec![rows, cols],
                reason: format!("expected {} entries, got {}", rows * cols, data.len()),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + i * n] = 1.0;
        }
        m
    }

    /// Rectangular matrix with `diag` on its main diagonal.
    pub fn from_diagonal(rows: usize, cols: usize, diag: &[f64]) -> Result<Self> {
        if diag.len() > rows.min(cols) {
            return Err(Error::param("diag", "longer than the main diagonal"));
        }
        check_finite(diag)?;
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i + i * rows] = d;
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Skips validation; callers guarantee length and finiteness.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        self.data[i + j * self.rows]
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_norm(&self, j: usize) -> f64 {
        l2(self.col(j))
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for j in 0..self.cols {
            for i in 0..self.rows {
                out[j + i * self.cols] = self.data[i + j * self.rows];
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                expected: vec![self.cols, rhs.cols],
                found: vec![rhs.rows, rhs.cols],
            });
        }
        let prod = self.as_faer() * rhs.as_faer();
        Ok(Self::from_faer(prod.as_ref()))
    }

    pub fn frob_norm(&self) -> f64 {
        l2(&self.data)
    }

    /// Trace inner product `tr(selfᵀ other)`.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch {
                expected: vec![self.rows, self.cols],
                found: vec![other.rows, other.cols],
            });
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch {
                expected: vec![self.rows, self.cols],
                found: vec![other.rows, other.cols],
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            data.extend(m.col(j).iter().copied());
        }
        Self::from_raw(rows, cols, data)
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_major_layout() {
        let m = Matrix::new(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 2), 6.0);
        assert_eq!(m.col(1), &[3., 4.]);
        assert_eq!(m.transpose().get(2, 1), 6.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn matmul_matches_loop() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0).unwrap();
        let b = Matrix::from_fn(4, 2, |i, j| (i as f64) * 0.5 - j as f64).unwrap();
        let c = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let expect: f64 = (0..4).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((c.get(i, j) - expect).abs() < 1e-12);
            }
        }
        assert!(a.matmul(&a).is_err());
    }
}
