use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fiberpca::experiment::{
    linspace_step, phase_grid_cells, sweep_cells, table1_cells, write_summary_csv, write_trials_csv, Cell,
    ExperimentGrid, SolverSettings, SweepAxis, DEFAULT_TRIALS,
};
use fiberpca::ingest::{
    build_tensor, detect_events, infer_range, lambda_for_target_ratio, parse_timezone, read_speed_records,
    write_speed_records, BuildOptions, EventOptions, LambdaSearch, TrafficFixtureSpec, WeekRange, DEFAULT_MIN_COVERAGE,
    HOURS_PER_WEEK,
};
use fiberpca::prox::SvdBackend;
use fiberpca::solver::{fiber_norms, solve, Regularizer, DEFAULT_EPSILON};
use fiberpca::synth::SynthSpec;
use fiberpca::tensor_io::{read_csv_long, read_tensor, write_csv_long, write_tensor};
use fiberpca::ObservationMask;

#[derive(Parser)]
#[command(
    name = "fiberpca",
    version,
    about = "Robust tensor recovery under fiber-sparse corruption"
)]
struct Cli {
    /// JSON file whose keys mirror the long flags (`max_iters` for `--max-iters`);
    /// flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corrupted low-rank tensor and its ground truth.
    Generate(GenerateArgs),
    /// Decompose a tensor read from a binary or long-CSV file.
    Solve(SolveArgs),
    /// Both regularizers over cubes of size 70, 90, 150 and 210 (times --scale).
    Table1(Table1Args),
    /// Vary the corruption or the observation ratio.
    Sweep(SweepArgs),
    /// Success rate over Tucker rank × observation ratio.
    PhaseGrid(PhaseGridArgs),
    /// Write a synthetic traffic feed with planted disrupted hours.
    Fixture(FixtureArgs),
    /// Build the traffic tensor from speed records and report disrupted hours.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Svd {
    Full,
    Gram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Reg {
    L21,
    L1,
}

impl From<Reg> for Regularizer {
    fn from(r: Reg) -> Self {
        match r {
            Reg::L21 => Regularizer::L21,
            Reg::L1 => Regularizer::L1,
        }
    }
}

#[derive(Args, Clone, Default)]
struct SolverFlags {
    /// Weight of the outlier term [default: 1/(0.03·max dim)].
    #[arg(long)]
    lambda: Option<f64>,
    /// Weight for the l1 baseline [default: 1/sqrt(max dim)].
    #[arg(long)]
    lambda_l1: Option<f64>,
    /// Fixed initial penalty [default: 1.25/‖B_(1)‖₂].
    #[arg(long)]
    mu: Option<f64>,
    /// Penalty growth factor per iteration; 1 keeps it constant [default: 1.5].
    #[arg(long)]
    mu_growth: Option<f64>,
    /// Relative residual tolerance [default: 1e-7].
    #[arg(long)]
    epsilon: Option<f64>,
    /// [default: 500]
    #[arg(long)]
    max_iters: Option<usize>,
    /// [default: full]
    #[arg(long, value_enum)]
    svd: Option<Svd>,
}

#[derive(Args, Clone, Default)]
struct GridFlags {
    /// [default: 10]
    #[arg(long)]
    trials: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Per-cell summary CSV [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial CSV.
    #[arg(long)]
    trials_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// SynthSpec JSON; individual flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// e.g. 70x70x70
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// `.dtns` binary tensor or long CSV (`i1,…,iN,value`).
    #[arg(long)]
    input: PathBuf,
    /// Shape for CSV input [default: inferred from the largest indices].
    #[arg(long)]
    shape: Option<String>,
    #[arg(long, value_enum)]
    regularizer: Option<Reg>,
    /// Mode whose fibers may be corrupted (zero-based).
    #[arg(long, default_value_t = 0)]
    outlier_mode: usize,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Table1Args {
    /// Multiplies every size; ranks stay at 0.1 of the size.
    #[arg(long)]
    scale: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Gamma,
    Rho,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated values; alternatively --from/--to/--step.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// [default: 70x70x70]
    #[arg(long)]
    shape: Option<String>,
    /// [default: 5x5x5]
    #[arg(long)]
    rank: Option<String>,
    /// Held fixed while sweeping ρ [default: 0.05].
    #[arg(long)]
    gamma: Option<f64>,
    /// Held fixed while sweeping γ [default: 1].
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated [default: l21].
    #[arg(long, value_enum, value_delimiter = ',')]
    regularizer: Vec<Reg>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args)]
struct PhaseGridArgs {
    /// [default: 70x70x70]
    #[arg(long)]
    shape: Option<String>,
    /// [default: 0.1]
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated ranks c, each used as (c, …, c) [default: 1..=20].
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
    /// Comma-separated observation ratios [default: 0.3, 0.4, …, 1].
    #[arg(long, value_delimiter = ',')]
    rhos: Vec<f64>,
    /// Shrinks the shape and every rank.
    #[arg(long)]
    scale: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 556)]
    segments: usize,
    #[arg(long, default_value_t = 17)]
    weeks: usize,
    /// Monday of week 0.
    #[arg(long, default_value = "2018-01-01")]
    start: NaiveDate,
    #[arg(long, default_value_t = 0.2)]
    missing: f64,
    #[arg(long, default_value_t = 0.01)]
    anomaly_fraction: f64,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Speed records CSV.
    #[arg(long)]
    out: PathBuf,
    /// JSON list of planted (week, hour) pairs.
    #[arg(long)]
    planted: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// CSV with header `segment_id,timestamp_iso8601,speed`.
    #[arg(long)]
    input: PathBuf,
    /// Monday of week 0 [default: week of the earliest record].
    #[arg(long)]
    start: Option<NaiveDate>,
    /// [default: through the latest record]
    #[arg(long)]
    weeks: Option<usize>,
    /// IANA name used for hour-of-week binning.
    #[arg(long, default_value = "UTC")]
    timezone: String,
    #[arg(long, default_value_t = DEFAULT_MIN_COVERAGE)]
    min_coverage: f64,
    /// Pick λ so that about this fraction of hours is flagged (overrides --lambda).
    #[arg(long)]
    target_ratio: Option<f64>,
    /// Solve on per-segment standardized speeds.
    #[arg(long)]
    standardize: bool,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory for report.json, report.csv and fibers.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// JSON mirror of the flags.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    shape: Option<String>,
    rank: Option<String>,
    gamma: Option<f64>,
    rho: Option<f64>,
    lambda: Option<f64>,
    lambda_l1: Option<f64>,
    mu: Option<f64>,
    mu_growth: Option<f64>,
    epsilon: Option<f64>,
    max_iters: Option<usize>,
    svd: Option<Svd>,
    seed: Option<u64>,
    trials: Option<usize>,
    threads: Option<usize>,
    regularizer: Option<Vec<Reg>>,
    scale: Option<f64>,
    out: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(p) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    fn settings(&self, f: &SolverFlags) -> SolverSettings {
        let svd = f.svd.or(self.svd).map(|s| match s {
            Svd::Full => SvdBackend::Full,
            Svd::Gram => SvdBackend::Gram,
        });
        SolverSettings {
            lambda: f.lambda.or(self.lambda),
            lambda_l1: f.lambda_l1.or(self.lambda_l1),
            mu: f.mu.or(self.mu),
            mu_growth: f.mu_growth.or(self.mu_growth),
            epsilon: Some(f.epsilon.or(self.epsilon).unwrap_or(DEFAULT_EPSILON)),
            max_iters: f.max_iters.or(self.max_iters),
            svd_backend: svd,
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split(['x', 'X', ','])
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .with_context(|| format!("bad dimension `{d}` in `{s}`"))
        })
        .collect()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn out_dir(path: Option<PathBuf>) -> Result<PathBuf> {
    let dir = path.context("--out is required")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Nonzero when some solve hit the iteration cap.
fn convergence_exit(unconverged: usize, total: usize) -> ExitCode {
    if unconverged == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{unconverged} of {total} solves did not converge");
        ExitCode::from(2)
    }
}

fn run_grid(cells: Vec<Cell>, grid: &GridFlags, file: &FileConfig) -> Result<ExitCode> {
    let trials = grid.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    let seed = grid.seed.or(file.seed).unwrap_or(0);
    let threads = grid.threads.or(file.threads);
    let grid_def = ExperimentGrid::new(cells, trials, seed)?;
    let start = Instant::now();
    let records = grid_def.run(threads)?;
    let summary = grid_def.summarize(&records);
    if let Some(p) = &grid.trials_out {
        let mut w = output(Some(p))?;
        write_trials_csv(&mut w, &grid_def, &records)?;
        w.flush()?;
    }
    let mut w = output(grid.out.as_deref().or(file.out.as_deref()))?;
    write_summary_csv(&mut w, &summary)?;
    w.flush()?;
    eprintln!("{} solves in {:.1}s", records.len(), start.elapsed().as_secs_f64());
    let unconverged = records.iter().filter(|r| !r.converged).count();
    Ok(convergence_exit(unconverged, records.len()))
}

fn generate(a: GenerateArgs, file: &FileConfig) -> Result<ExitCode> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SynthSpec::cube(70, 3, 5, 0.05, 1.0, 0),
    };
    if let Some(s) = a.shape.as_deref().or(file.shape.as_deref()) {
        spec.shape = parse_dims(s)?;
    }
    if let Some(r) = a.rank.as_deref().or(file.rank.as_deref()) {
        spec.tucker_rank = parse_dims(r)?;
    }
    spec.gamma = a.gamma.or(file.gamma).unwrap_or(spec.gamma);
    spec.rho = a.rho.or(file.rho).unwrap_or(spec.rho);
    spec.seed = a.seed.or(file.seed).unwrap_or(spec.seed);
    let truth = spec.generate()?;
    let dir = out_dir(a.out.or(file.out.clone()))?;

    write_tensor(&mut BufWriter::new(File::create(dir.join("b.dtns"))?), &truth.b)?;
    write_tensor(&mut BufWriter::new(File::create(dir.join("x0.dtns"))?), &truth.x0)?;
    let mut csv = BufWriter::new(File::create(dir.join("b.csv"))?);
    write_csv_long(&mut csv, &truth.b, Some(&truth.mask))?;
    csv.flush()?;
    let meta = serde_json::json!({
        "spec": spec,
        "outlier_support": truth.outlier_support,
        "observed": truth.mask.observed_count(),
    });
    fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&meta)?)?;
    eprintln!(
        "wrote {} ({} outlier fibers, {} observed entries)",
        dir.display(),
        truth.outlier_support.len(),
        truth.mask.observed_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn solve_cmd(a: SolveArgs, file: &FileConfig) -> Result<ExitCode> {
    let is_csv = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let reader = BufReader::new(File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?);
    let (b, mask) = if is_csv {
        let shape = a.shape.as_deref().map(parse_dims).transpose()?;
        let long = read_csv_long(reader, shape.as_deref())?;
        (long.tensor, long.observed)
    } else {
        let t = read_tensor(&mut { reader })?;
        let m = ObservationMask::full(t.shape())?;
        (t, m)
    };
    let reg = a
        .regularizer
        .or(file.regularizer.as_ref().and_then(|r| r.first().copied()))
        .unwrap_or(Reg::L21);
    let mut cfg = file.settings(&a.solver).config(b.shape(), reg.into());
    cfg.outlier_mode = a.outlier_mode;
    let start = Instant::now();
    let result = solve(&b, (!mask.is_full()).then_some(&mask), &cfg, &mut |_| {})?;
    let secs = start.elapsed().as_secs_f64();
    eprintln!(
        "{} iterations in {secs:.2}s, residual {:.3e}, {} of {} fibers flagged",
        result.iterations,
        result.final_residual,
        result.outlier_fibers.len(),
        result.fiber_count
    );
    if let Some(dir) = a.out.or(file.out.clone()) {
        fs::create_dir_all(&dir)?;
        write_tensor(
            &mut BufWriter::new(File::create(dir.join("x_hat.dtns"))?),
            result.x_hat(),
        )?;
        write_tensor(
            &mut BufWriter::new(File::create(dir.join("e_hat.dtns"))?),
            result.e_hat(),
        )?;
        fs::write(dir.join("result.json"), serde_json::to_string_pretty(&result)?)?;
    } else {
        println!("{}", serde_json::to_string_pretty(&result)?);
    }
    Ok(convergence_exit(!result.converged as usize, 1))
}

fn table1(a: Table1Args, file: &FileConfig) -> Result<ExitCode> {
    let scale = a.scale.or(file.scale).unwrap_or(1.0);
    let cells = table1_cells(scale, &file.settings(&a.solver))?;
    run_grid(cells, &a.grid, file)
}

fn sweep(a: SweepArgs, file: &FileConfig) -> Result<ExitCode> {
    let values = if !a.values.is_empty() {
        a.values.clone()
    } else {
        match (a.from, a.to, a.step) {
            (Some(f), Some(t), Some(s)) => linspace_step(f, t, s)?,
            _ => bail!("give --values or all of --from, --to and --step"),
        }
    };
    let shape = parse_dims(a.shape.as_deref().or(file.shape.as_deref()).unwrap_or("70x70x70"))?;
    let rank = parse_dims(a.rank.as_deref().or(file.rank.as_deref()).unwrap_or("5x5x5"))?;
    let (axis, fixed) = match a.axis {
        Axis::Gamma => (SweepAxis::Gamma, a.rho.or(file.rho).unwrap_or(1.0)),
        Axis::Rho => (SweepAxis::Rho, a.gamma.or(file.gamma).unwrap_or(0.05)),
    };
    let regs: Vec<Regularizer> = if !a.regularizer.is_empty() {
        a.regularizer.iter().map(|&r| r.into()).collect()
    } else {
        file.regularizer
            .clone()
            .unwrap_or(vec![Reg::L21])
            .into_iter()
            .map(Into::into)
            .collect()
    };
    let cells = sweep_cells(&shape, &rank, axis, &values, fixed, &regs, &file.settings(&a.solver));
    run_grid(cells, &a.grid, file)
}

fn phase_grid(a: PhaseGridArgs, file: &FileConfig) -> Result<ExitCode> {
    let scale = a.scale.or(file.scale).unwrap_or(1.0);
    if !(scale > 0.0 && scale.is_finite()) {
        bail!("--scale must be positive");
    }
    let shape: Vec<usize> = parse_dims(a.shape.as_deref().or(file.shape.as_deref()).unwrap_or("70x70x70"))?
        .into_iter()
        .map(|d| ((d as f64 * scale).round() as usize).max(1))
        .collect();
    let ranks: Vec<usize> = if a.ranks.is_empty() {
        (1..=20).collect()
    } else {
        a.ranks.clone()
    };
    let mut ranks: Vec<usize> = ranks
        .into_iter()
        .map(|c| ((c as f64 * scale).round() as usize).max(1))
        .collect();
    ranks.dedup();
    let rhos = if a.rhos.is_empty() {
        linspace_step(0.3, 1.0, 0.1)?
    } else {
        a.rhos.clone()
    };
    let gamma = a.gamma.or(file.gamma).unwrap_or(0.1);
    let cells = phase_grid_cells(&shape, gamma, &ranks, &rhos, &file.settings(&a.solver));
    run_grid(cells, &a.grid, file)
}

fn fixture(a: FixtureArgs) -> Result<ExitCode> {
    let spec = TrafficFixtureSpec {
        segments: a.segments,
        weeks: a.weeks,
        start: a.start,
        missing: a.missing,
        anomaly_fraction: a.anomaly_fraction,
        shift: a.shift,
        seed: a.seed,
    };
    let fx = spec.generate()?;
    let w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    write_speed_records(w, &fx.records)?;
    if let Some(p) = a.planted {
        let planted: Vec<(usize, usize)> = fx
            .planted_hours
            .iter()
            .map(|&j| (j / HOURS_PER_WEEK, j % HOURS_PER_WEEK))
            .collect();
        fs::write(p, serde_json::to_string(&planted)?)?;
    }
    eprintln!("{} records, {} planted hours", fx.records.len(), fx.planted_hours.len());
    Ok(ExitCode::SUCCESS)
}

fn ingest(a: IngestArgs, file: &FileConfig) -> Result<ExitCode> {
    let start = Instant::now();
    let tz = parse_timezone(&a.timezone)?;
    let reader = BufReader::new(File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?);
    let parsed = read_speed_records(reader, !a.lenient)?;
    for e in &parsed.skipped {
        eprintln!("skipped line {}: {}", e.line, e.message);
    }
    let range = match (a.start, a.weeks) {
        (Some(s), Some(w)) => WeekRange::new(s, w)?,
        (Some(s), None) => {
            let inferred = infer_range(&parsed.records, tz)?;
            let last = inferred.start + chrono::Duration::weeks(inferred.weeks as i64);
            WeekRange::new(s, ((last - s).num_days().max(7) / 7) as usize)?
        }
        (None, weeks) => {
            let inferred = infer_range(&parsed.records, tz)?;
            WeekRange::new(inferred.start, weeks.unwrap_or(inferred.weeks))?
        }
    };
    let opts = BuildOptions {
        range,
        min_coverage: a.min_coverage,
        timezone: tz,
    };
    let tt = build_tensor(&parsed.records, &opts)?;
    let built = start.elapsed().as_secs_f64();
    println!(
        "tensor {:?} from {} records ({} outside the range), {} segments dropped, observation ratio {:.4}",
        tt.tensor.shape(),
        parsed.records.len(),
        tt.out_of_range,
        tt.dropped_segments.len(),
        tt.observation_ratio
    );

    let settings = file.settings(&a.solver);
    let mut ev = EventOptions::for_tensor(&tt, None);
    ev.solver = settings.config(tt.tensor.shape(), Regularizer::L21);
    ev.standardize = a.standardize;
    if let Some(target) = a.target_ratio {
        let choice = lambda_for_target_ratio(&tt, target, &ev, &LambdaSearch::around(ev.solver.lambda))?;
        if let Some(w) = &choice.warning {
            eprintln!("warning: {w}");
        }
        println!(
            "λ = {} (ratio {:.4} after {} steps)",
            choice.lambda, choice.ratio, choice.steps
        );
        ev.solver.lambda = choice.lambda;
    }
    let t = Instant::now();
    let (result, report) = detect_events(&tt, &ev)?;
    let solve_secs = t.elapsed().as_secs_f64();
    println!(
        "solved in {solve_secs:.1}s ({} iterations, converged {}), build {built:.1}s, total {:.1}s",
        result.iterations,
        result.converged,
        start.elapsed().as_secs_f64()
    );
    println!(
        "{} of {} hours flagged (corruption ratio {:.4})",
        report.flagged_hours.len(),
        tt.range.hours(),
        report.corruption_ratio
    );
    let norms = fiber_norms(result.e_hat(), 0)?;
    for f in &report.flagged_hours {
        println!(
            "  week {:>2} hour {:>3}  {}  ‖e‖ = {:.3}",
            f.week, f.hour, f.timestamp, norms[f.fiber]
        );
    }

    if let Some(dir) = a.out.or(file.out.clone()) {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.json"), report.to_json())?;
        report.write_csv(BufWriter::new(File::create(dir.join("report.csv"))?))?;
        let mut w = BufWriter::new(File::create(dir.join("fibers.csv"))?);
        writeln!(w, "fiber,week,hour,norm,flagged")?;
        let flagged: std::collections::BTreeSet<usize> = result.outlier_fibers.iter().copied().collect();
        for (j, n) in norms.iter().enumerate() {
            writeln!(
                w,
                "{j},{},{},{n:e},{}",
                j / HOURS_PER_WEEK,
                j % HOURS_PER_WEEK,
                flagged.contains(&j)
            )?;
        }
        w.flush()?;
    }
    Ok(convergence_exit(!result.converged as usize, 1))
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate(a, &file),
        Command::Solve(a) => solve_cmd(a, &file),
        Command::Table1(a) => table1(a, &file),
        Command::Sweep(a) => sweep(a, &file),
        Command::PhaseGrid(a) => phase_grid(a, &file),
        Command::Fixture(a) => fixture(a),
        Command::Ingest(a) => ingest(a, &file),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
