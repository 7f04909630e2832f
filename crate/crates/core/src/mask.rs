use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{element_count, DenseTensor};

/// Boolean tensor marking observed entries, stored in the same linear order
/// as [`DenseTensor`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    shape: Vec<usize>,
    observed: Vec<bool>,
    count: usize,
}

impl ObservationMask {
    pub fn new(shape: Vec<usize>, observed: Vec<bool>) -> Result<Self> {
        // reuse tensor shape validation
        DenseTensor::zeros(&shape)?;
        let len: usize = shape.iter().product();
        if observed.len() != len {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {len} mask entries, got {}", observed.len()),
            });
        }
        let count = observed.iter().filter(|&&o| o).count();
        Ok(Self { shape, observed, count })
    }

    pub fn full(shape: &[usize]) -> Result<Self> {
        let len = element_count(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            observed: vec![true; len],
            count: len,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, linear: usize) -> bool {
        self.observed[linear]
    }

    pub fn observed_count(&self) -> usize {
        self.count
    }

    pub fn is_full(&self) -> bool {
        self.count == self.observed.len()
    }

    pub fn ratio(&self) -> f64 {
        self.count as f64 / self.observed.len() as f64
    }

    /// Copy of `t` with unobserved entries set to zero.
    pub fn apply(&self, t: &DenseTensor) -> Result<DenseTensor> {
        if t.shape() != self.shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                found: t.shape().to_vec(),
            });
        }
        let data = t
            .data()
            .iter()
            .zip(&self.observed)
            .map(|(&x, &o)| if o { x } else { 0.0 })
            .collect();
        Ok(DenseTensor::from_raw(self.shape.clone(), data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_apply() {
        let m = ObservationMask::new(vec![2, 2], vec![true, false, true, true]).unwrap();
        assert_eq!(m.observed_count(), 3);
        assert_eq!(m.ratio(), 0.75);
        assert!(!m.is_full());
        let t = DenseTensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(m.apply(&t).unwrap().data(), &[1., 0., 3., 4.]);
        assert!(ObservationMask::new(vec![2, 2], vec![true; 3]).is_err());
        assert!(ObservationMask::full(&[3, 2]).unwrap().is_full());
    }
}
