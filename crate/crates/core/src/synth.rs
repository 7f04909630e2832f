//! Synthetic ground truth: random Tucker tensors with corrupted fibers and
//! random observation masks.
//!
//! # Randomness
//!
//! Every draw comes from ChaCha8 seeded with [`SynthSpec::seed`]. Each
//! ingredient reads its own stream (`ChaCha8Rng::set_stream`), so changing
//! for instance the observation ratio leaves the low-rank tensor and the
//! corruption untouched:
//!
//! | stream | used for |
//! |-------:|----------|
//! | 0 | Gaussian core |
//! | 1 | Gaussian factor draws before Gram–Schmidt |
//! | 2 | corrupted fiber positions |
//! | 3 | corruption values |
//! | 4 | observation mask |
//!
//! Counts `round(γ·p)` and `round(ρ·total)` use round-half-up.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::{l2, Matrix};
use crate::solver::zero_fibers;
use crate::tensor::{element_count, tucker_compose, DenseTensor, TuckerFactors};
use crate::tensor_io::MAX_ELEMENTS;

pub const STREAM_CORE: u64 = 0;
pub const STREAM_FACTORS: u64 = 1;
pub const STREAM_SUPPORT: u64 = 2;
pub const STREAM_VALUES: u64 = 3;
pub const STREAM_MASK: u64 = 4;

/// Seeded generator positioned on one of the documented streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `⌊x + 0.5⌋` for nonnegative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub shape: Vec<usize>,
    pub tucker_rank: Vec<usize>,
    /// Fraction of mode-0 fibers corrupted.
    pub gamma: f64,
    /// Fraction of entries observed.
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SynthSpec {
    /// Cube `size^order` with rank `rank` in every mode.
    pub fn cube(size: usize, order: usize, rank: usize, gamma: f64, rho: f64, seed: u64) -> Self {
        Self {
            shape: vec![size; order],
            tucker_rank: vec![rank; order],
            gamma,
            rho,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let len = element_count(&self.shape)?;
        if len > MAX_ELEMENTS {
            return Err(Error::param(
                "shape",
                format!("{len} entries exceeds the limit of {MAX_ELEMENTS}"),
            ));
        }
        if self.tucker_rank.len() != self.shape.len() {
            return Err(Error::param("tucker_rank", "needs one entry per mode"));
        }
        if self.tucker_rank.iter().zip(&self.shape).any(|(&c, &i)| c == 0 || c > i) {
            return Err(Error::param("tucker_rank", "each rank must lie in 1..=dimension"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::param("rho", format!("must lie in (0, 1], got {}", self.rho)));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn generate(&self) -> Result<GroundTruth> {
        self.validate()?;
        let (low_rank, _) = gen_low_rank(
            &self.shape,
            &self.tucker_rank,
            &mut stream_rng(self.seed, STREAM_CORE),
            &mut stream_rng(self.seed, STREAM_FACTORS),
        )?;
        let corruption = corrupt_fibers(
            &low_rank,
            self.gamma,
            &mut stream_rng(self.seed, STREAM_SUPPORT),
            &mut stream_rng(self.seed, STREAM_VALUES),
        )?;
        let mask = sample_mask(&self.shape, self.rho, &mut stream_rng(self.seed, STREAM_MASK))?;
        let full = corruption.x0.add(&corruption.e0)?;
        let b = mask.apply(&full)?;
        Ok(GroundTruth {
            x0: corruption.x0,
            e0: corruption.e0,
            b,
            mask,
            outlier_support: corruption.support,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Low-rank tensor with the corrupted fibers set to zero.
    pub x0: DenseTensor,
    /// Fiber-sparse corruption, nonzero only on `outlier_support`.
    pub e0: DenseTensor,
    /// `(x0 + e0)` with unobserved entries zeroed.
    pub b: DenseTensor,
    pub mask: ObservationMask,
    /// Sorted mode-0 unfolding column indices of corrupted fibers.
    pub outlier_support: Vec<usize>,
}

const GS_REL_TOL: f64 = 1e-8;

/// Orthonormal `rows × cols` matrix by Gram–Schmidt on Gaussian columns;
/// near-dependent draws are replaced by fresh ones.
pub fn gaussian_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if cols == 0 || cols > rows {
        return Err(Error::param(
            "cols",
            format!("need 1 ≤ cols ≤ rows, got {cols} > {rows}"),
        ));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut attempts = 0;
    while basis.len() < cols {
        attempts += 1;
        if attempts > 100 * cols {
            return Err(Error::Numerical("Gram–Schmidt kept drawing dependent vectors".into()));
        }
        let mut v: Vec<f64> = (0..rows).map(|_| StandardNormal.sample(rng)).collect();
        let original = l2(&v);
        // two passes of modified Gram–Schmidt keep the basis orthonormal to
        // working precision
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qa)| *x -= dot * qa);
            }
        }
        let norm = l2(&v);
        if norm <= GS_REL_TOL * original {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(Matrix::from_raw(rows, cols, basis.concat()))
}

/// Random Tucker tensor: standard Gaussian core times orthonormalized
/// Gaussian factors.
pub fn gen_low_rank(
    shape: &[usize],
    rank: &[usize],
    core_rng: &mut impl Rng,
    factor_rng: &mut impl Rng,
) -> Result<(DenseTensor, TuckerFactors)> {
    if rank.len() != shape.len() || rank.iter().zip(shape).any(|(&c, &i)| c == 0 || c > i) {
        return Err(Error::param(
            "rank",
            format!("{rank:?} incompatible with shape {shape:?}"),
        ));
    }
    let core = DenseTensor::from_fn(rank, |_| StandardNormal.sample(core_rng))?;
    let factors = shape
        .iter()
        .zip(rank)
        .map(|(&i, &c)| gaussian_orthonormal(i, c, factor_rng))
        .collect::<Result<Vec<_>>>()?;
    let f = TuckerFactors::new(core, factors)?;
    Ok((tucker_compose(&f)?, f))
}

#[derive(Clone, Debug)]
pub struct Corruption {
    pub e0: DenseTensor,
    pub support: Vec<usize>,
    pub x0: DenseTensor,
}

/// Corrupts `round(γ·p)` uniformly chosen mode-0 fibers with i.i.d. U(0,1)
/// entries and zeroes those fibers in the low-rank tensor.
pub fn corrupt_fibers(
    low_rank: &DenseTensor,
    gamma: f64,
    support_rng: &mut impl Rng,
    value_rng: &mut impl Rng,
) -> Result<Corruption> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("must lie in [0, 1], got {gamma}")));
    }
    let rows = low_rank.shape()[0];
    let p = low_rank.len() / rows;
    let k = round_half_up(gamma * p as f64).min(p);
    let mut support = index::sample(support_rng, p, k).into_vec();
    support.sort_unstable();

    let mut e0 = DenseTensor::zeros(low_rank.shape())?;
    let ed = e0.data_mut();
    for &j in &support {
        for x in &mut ed[j * rows..(j + 1) * rows] {
            *x = value_rng.gen::<f64>();
        }
    }
    let mut x0 = low_rank.clone();
    zero_fibers(&mut x0, 0, &support)?;
    Ok(Corruption { e0, support, x0 })
}

/// Uniform subset of `round(ρ·total)` observed entries.
pub fn sample_mask(shape: &[usize], rho: f64, rng: &mut impl Rng) -> Result<ObservationMask> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", format!("must lie in (0, 1], got {rho}")));
    }
    let total = element_count(shape)?;
    let k = round_half_up(rho * total as f64).min(total);
    if k == total {
        return ObservationMask::full(shape);
    }
    let mut observed = vec![false; total];
    for i in index::sample(rng, total, k) {
        observed[i] = true;
    }
    ObservationMask::new(shape.to_vec(), observed)
}
