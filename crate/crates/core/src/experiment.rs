//! Monte Carlo experiment grids over synthetic instances.
//!
//! Trial `t` of every cell draws its instance from seed
//! `derive_seed(base_seed, t)`, so cells that differ only in the solver or in
//! ρ share the same low-rank tensor and corruption (common random numbers).

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{prf, relative_error, success, Score, SUCCESS_THRESHOLD};
use crate::prox::SvdBackend;
use crate::solver::{horpca_fiber, robust_completion, MuInit, Regularizer, SolverConfig};
use crate::synth::SynthSpec;

pub const DEFAULT_TRIALS: usize = 10;

/// SplitMix64 finalizer over `base + trial`.
pub fn derive_seed(base: u64, trial: usize) -> u64 {
    let mut z = base.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Solver knobs shared by every cell; `None` keeps the per-shape default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub lambda: Option<f64>,
    pub lambda_l1: Option<f64>,
    pub mu: Option<f64>,
    pub mu_growth: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub svd_backend: Option<SvdBackend>,
}

impl SolverSettings {
    pub fn config(&self, shape: &[usize], regularizer: Regularizer) -> SolverConfig {
        let mut cfg = SolverConfig::for_shape(shape, regularizer);
        let lambda = match regularizer {
            Regularizer::L21 => self.lambda,
            Regularizer::L1 => self.lambda_l1,
        };
        if let Some(l) = lambda {
            cfg.lambda = l;
        }
        if let Some(mu) = self.mu {
            cfg.mu_init = MuInit::Value(mu);
        }
        if let Some(g) = self.mu_growth {
            cfg.mu_growth = g;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(b) = self.svd_backend {
            cfg.svd_backend = b;
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// Instance parameters; the seed is replaced per trial.
    pub spec: SynthSpec,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub score: Score,
    pub converged: bool,
    pub success: bool,
}

/// One synthetic instance solved and scored. Uses the completion solver
/// unless every entry is observed.
pub fn run_trial(spec: &SynthSpec, cfg: &SolverConfig) -> Result<(Score, bool)> {
    let truth = spec.generate()?;
    let start = Instant::now();
    let result = if truth.mask.is_full() {
        horpca_fiber(&truth.b, cfg)?
    } else {
        robust_completion(&truth.b, &truth.mask, cfg)?
    };
    let elapsed = start.elapsed().as_secs_f64();
    let re = relative_error(result.x_hat(), &truth.x0, &result.outlier_fibers, cfg.outlier_mode)?;
    let counts = prf(&result.outlier_fibers, &truth.outlier_support);
    Ok((Score::new(re, counts, result.iterations, elapsed), result.converged))
}

#[derive(Clone, Debug)]
pub struct ExperimentGrid {
    pub cells: Vec<Cell>,
    pub trials: usize,
    pub base_seed: u64,
}

impl ExperimentGrid {
    pub fn new(cells: Vec<Cell>, trials: usize, base_seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        for c in &cells {
            c.spec.validate()?;
            c.solver.validate(c.spec.shape.len())?;
        }
        Ok(Self {
            cells,
            trials,
            base_seed,
        })
    }

    /// Every (cell, trial) pair, run on `threads` workers (`None`: rayon's
    /// default) and returned in (cell, trial) order.
    pub fn run(&self, threads: Option<usize>) -> Result<Vec<TrialRecord>> {
        let jobs: Vec<(usize, usize)> = (0..self.cells.len())
            .flat_map(|c| (0..self.trials).map(move |t| (c, t)))
            .collect();
        let work = || {
            jobs.par_iter()
                .map(|&(c, t)| {
                    let cell = &self.cells[c];
                    let seed = derive_seed(self.base_seed, t);
                    let spec = SynthSpec {
                        seed,
                        ..cell.spec.clone()
                    };
                    let (score, converged) = run_trial(&spec, &cell.solver)?;
                    Ok(TrialRecord {
                        cell: c,
                        trial: t,
                        seed,
                        success: success(&score, SUCCESS_THRESHOLD),
                        score,
                        converged,
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::param("threads", e.to_string()))?
                .install(work),
            None => work(),
        }
    }

    pub fn summarize(&self, records: &[TrialRecord]) -> Vec<CellSummary> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.cell == i).collect();
                let k = rs.len().max(1) as f64;
                let mean = |f: &dyn Fn(&TrialRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / k;
                CellSummary {
                    cell: i,
                    shape: cell.spec.shape.clone(),
                    rank: cell.spec.tucker_rank.clone(),
                    gamma: cell.spec.gamma,
                    rho: cell.spec.rho,
                    regularizer: cell.solver.regularizer,
                    lambda: cell.solver.lambda,
                    trials: rs.len(),
                    success_rate: mean(&|r| r.success as u8 as f64),
                    mean_re: mean(&|r| r.score.re),
                    mean_precision: mean(&|r| r.score.precision),
                    mean_recall: mean(&|r| r.score.recall),
                    mean_iterations: mean(&|r| r.score.iterations as f64),
                    converged: rs.iter().filter(|r| r.converged).count(),
                    mean_wall_time_seconds: mean(&|r| r.score.wall_time_seconds),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub shape: Vec<usize>,
    pub rank: Vec<usize>,
    pub gamma: f64,
    pub rho: f64,
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_re: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_iterations: f64,
    pub converged: usize,
    pub mean_wall_time_seconds: f64,
}

fn dims(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn reg_name(r: Regularizer) -> &'static str {
    match r {
        Regularizer::L21 => "l21",
        Regularizer::L1 => "l1",
    }
}

/// Wall time is always the last column.
pub const TRIAL_CSV_HEADER: &str =
    "cell,trial,seed,shape,rank,gamma,rho,regularizer,lambda,re,precision,recall,tp,fp,fn,iterations,converged,success,wall_time_seconds";

pub const SUMMARY_CSV_HEADER: &str =
    "cell,shape,rank,gamma,rho,regularizer,lambda,trials,success_rate,mean_re,mean_precision,mean_recall,mean_iterations,converged,mean_wall_time_seconds";

pub fn write_trials_csv(w: &mut impl Write, grid: &ExperimentGrid, records: &[TrialRecord]) -> Result<()> {
    writeln!(w, "{TRIAL_CSV_HEADER}")?;
    for r in records {
        let c = &grid.cells[r.cell];
        let s = &r.score;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:e},{},{},{},{},{},{},{},{},{:.3}",
            r.cell,
            r.trial,
            r.seed,
            dims(&c.spec.shape),
            dims(&c.spec.tucker_rank),
            c.spec.gamma,
            c.spec.rho,
            reg_name(c.solver.regularizer),
            c.solver.lambda,
            s.re,
            s.precision,
            s.recall,
            s.tp,
            s.fp,
            s.fn_,
            s.iterations,
            r.converged,
            r.success,
            s.wall_time_seconds
        )?;
    }
    Ok(())
}

pub fn write_summary_csv(w: &mut impl Write, summaries: &[CellSummary]) -> Result<()> {
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:e},{},{},{},{},{:.3}",
            s.cell,
            dims(&s.shape),
            dims(&s.rank),
            s.gamma,
            s.rho,
            reg_name(s.regularizer),
            s.lambda,
            s.trials,
            s.success_rate,
            s.mean_re,
            s.mean_precision,
            s.mean_recall,
            s.mean_iterations,
            s.converged,
            s.mean_wall_time_seconds
        )?;
    }
    Ok(())
}

pub const TABLE1_SIZES: [usize; 4] = [70, 90, 150, 210];

fn scaled(size: usize, scale: f64) -> usize {
    ((size as f64 * scale).round() as usize).max(2)
}

fn instance(shape: &[usize], rank: &[usize], gamma: f64, rho: f64) -> SynthSpec {
    SynthSpec {
        shape: shape.to_vec(),
        tucker_rank: rank.iter().zip(shape).map(|(&c, &i)| c.clamp(1, i)).collect(),
        gamma,
        rho,
        seed: 0,
    }
}

/// Cubes of the table sizes times `scale`, rank `0.1·I`, γ = 0.05, solved
/// with both regularizers (l₂,₁ then l₁ per size).
pub fn table1_cells(scale: f64, settings: &SolverSettings) -> Result<Vec<Cell>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param("scale", format!("must be positive, got {scale}")));
    }
    let mut cells = Vec::new();
    for size in TABLE1_SIZES.map(|s| scaled(s, scale)) {
        let rank = ((0.1 * size as f64).round() as usize).max(1);
        for reg in [Regularizer::L21, Regularizer::L1] {
            let spec = instance(&[size; 3], &[rank; 3], 0.05, 1.0);
            cells.push(Cell {
                solver: settings.config(&spec.shape, reg),
                spec,
            });
        }
    }
    Ok(cells)
}

/// Which parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    Rho,
}

pub fn sweep_cells(
    shape: &[usize],
    rank: &[usize],
    axis: SweepAxis,
    values: &[f64],
    fixed: f64,
    regularizers: &[Regularizer],
    settings: &SolverSettings,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &v in values {
        let (gamma, rho) = match axis {
            SweepAxis::Gamma => (v, fixed),
            SweepAxis::Rho => (fixed, v),
        };
        for &reg in regularizers {
            let spec = instance(shape, rank, gamma, rho);
            cells.push(Cell {
                solver: settings.config(&spec.shape, reg),
                spec,
            });
        }
    }
    cells
}

/// Ranks `(c, …, c)` × observation ratios at fixed γ, l₂,₁ only, ordered
/// by ρ then c. Ranks are clipped to the dimensions.
pub fn phase_grid_cells(
    shape: &[usize],
    gamma: f64,
    ranks: &[usize],
    rhos: &[f64],
    settings: &SolverSettings,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &rho in rhos {
        for &c in ranks {
            let spec = instance(shape, &vec![c; shape.len()], gamma, rho);
            cells.push(Cell {
                solver: settings.config(&spec.shape, Regularizer::L21),
                spec,
            });
        }
    }
    cells
}

/// `start, start+step, …` up to `stop` inclusive, rounded to 1e-9 to keep
/// the printed values clean.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start <= stop && start.is_finite() && stop.is_finite()) {
        return Err(Error::param("range", format!("bad range {start}..={stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}
