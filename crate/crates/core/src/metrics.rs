//! Scoring a solve against ground truth.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::zero_fibers;
use crate::tensor::{same_shape, DenseTensor};

/// Default success cutoff applied to both precision and recall.
pub const SUCCESS_THRESHOLD: f64 = 0.99;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub re: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub iterations: usize,
    pub wall_time_seconds: f64,
}

impl Score {
    pub fn new(re: f64, prf: Prf, iterations: usize, wall_time_seconds: f64) -> Self {
        Self {
            re,
            precision: prf.precision,
            recall: prf.recall,
            tp: prf.tp,
            fp: prf.fp,
            fn_: prf.fn_,
            iterations,
            wall_time_seconds,
        }
    }

    pub const CSV_HEADER: &'static str = "re,precision,recall,tp,fp,fn,iterations,wall_time_seconds";

    pub fn csv_fields(&self) -> String {
        format!(
            "{:e},{},{},{},{},{},{},{:.3}",
            self.re, self.precision, self.recall, self.tp, self.fp, self.fn_, self.iterations, self.wall_time_seconds
        )
    }

    /// Appends one row, writing the header first when `w` is at its start.
    pub fn append_csv(&self, w: &mut impl Write, write_header: bool) -> Result<()> {
        if write_header {
            writeln!(w, "{}", Self::CSV_HEADER)?;
        }
        writeln!(w, "{}", self.csv_fields())?;
        Ok(())
    }
}

/// `‖x0 − x̂‖_F / ‖x0‖_F` after zeroing `x_hat` on the `detected` fibers of
/// `mode`. `x0` is expected to be zero on the true outlier fibers already.
pub fn relative_error(x_hat: &DenseTensor, x0: &DenseTensor, detected: &[usize], mode: usize) -> Result<f64> {
    same_shape(x0, x_hat)?;
    let norm = x0.frob_norm();
    if norm == 0.0 {
        return Err(Error::param("x0", "reference tensor has zero norm"));
    }
    let mut est = x_hat.clone();
    zero_fibers(&mut est, mode, detected)?;
    Ok(x0.sub(&est)?.frob_norm() / norm)
}

/// Precision and recall of `detected` against `truth`. Empty denominators
/// score 1 (nothing claimed means nothing claimed wrongly).
pub fn prf(detected: &[usize], truth: &[usize]) -> Prf {
    let d: BTreeSet<usize> = detected.iter().copied().collect();
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    let tp = d.intersection(&t).count();
    let fp = d.len() - tp;
    let fn_ = t.len() - tp;
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Prf {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
    }
}

/// Strictly greater than `threshold` on both precision and recall.
pub fn success(score: &Score, threshold: f64) -> bool {
    score.precision > threshold && score.recall > threshold
}
