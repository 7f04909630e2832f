//! Traffic speed records to a (segment × hour-of-week × week) tensor, and
//! disrupted-hour detection on top of the completion solver.
//!
//! Hour-of-week 0 is Monday 00:00–01:00 local time and 167 is Sunday
//! 23:00–24:00. Week 0 starts at midnight local time on
//! [`WeekRange::start`], which must be a Monday.
//!
//! Outliers are fibers along the segment axis (mode 0): one fiber is every
//! segment at a fixed (hour, week), i.e. column `hour + 168·week` of the
//! mode-0 unfolding.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc, Weekday};
use chrono_tz::Tz;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::solver::{robust_completion, SolverConfig, SolverResult};
use crate::synth::{round_half_up, sample_mask, stream_rng};
use crate::tensor::DenseTensor;

pub const HOURS_PER_WEEK: usize = 168;
pub const CSV_HEADER: [&str; 3] = ["segment_id", "timestamp_iso8601", "speed"];
pub const DEFAULT_MIN_COVERAGE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedRecord {
    pub segment_id: String,
    pub timestamp: DateTime<Utc>,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<SpeedRecord>,
    /// Rows skipped in lenient mode.
    pub skipped: Vec<RowError>,
}

/// Accepts RFC 3339 with an offset, or a naive `YYYY-MM-DDTHH:MM:SS[.f]`
/// (space separator allowed) read as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<SpeedRecord, String> {
    if rec.len() != 3 {
        return Err(format!("expected 3 fields, found {}", rec.len()));
    }
    let segment_id = rec[0].to_string();
    if segment_id.is_empty() {
        return Err("empty segment_id".into());
    }
    let timestamp = parse_timestamp(&rec[1]).ok_or_else(|| format!("bad timestamp `{}`", &rec[1]))?;
    let speed: f64 = rec[2].parse().map_err(|_| format!("bad speed `{}`", &rec[2]))?;
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(format!("speed must be finite and nonnegative, got `{}`", &rec[2]));
    }
    Ok(SpeedRecord {
        segment_id,
        timestamp,
        speed,
    })
}

/// Reads `segment_id,timestamp_iso8601,speed` rows. With `strict`, the first
/// malformed row is an error; otherwise it is skipped and reported.
pub fn read_speed_records(r: impl Read, strict: bool) -> Result<ParsedRecords> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?;
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut out = ParsedRecords::default();
    let mut raw = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => match parse_row(&raw) {
                Ok(rec) => out.records.push(rec),
                Err(message) => {
                    let line = raw.position().map_or(line, |p| p.line());
                    if strict {
                        return Err(Error::Parse { line, message });
                    }
                    out.skipped.push(RowError { line, message });
                }
            },
            Err(e) => {
                if strict || !matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) {
                    return Err(e.into());
                }
                let line = e.position().map_or(line, |p| p.line());
                out.skipped.push(RowError {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_speed_records(w: impl Write, records: &[SpeedRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for r in records {
        let ts = r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true);
        wtr.write_record([r.segment_id.as_str(), ts.as_str(), format!("{:?}", r.speed).as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Whole weeks starting on a Monday.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeekRange {
    pub start: NaiveDate,
    pub weeks: usize,
}

impl WeekRange {
    pub fn new(start: NaiveDate, weeks: usize) -> Result<Self> {
        if start.weekday() != Weekday::Mon {
            return Err(Error::param(
                "start",
                format!("{start} is a {:?}, not a Monday", start.weekday()),
            ));
        }
        if weeks == 0 {
            return Err(Error::param("weeks", "must be at least 1"));
        }
        Ok(Self { start, weeks })
    }

    pub fn hours(&self) -> usize {
        HOURS_PER_WEEK * self.weeks
    }
}

/// Smallest range covering every record: from the Monday on or before the
/// earliest local date through the week holding the latest.
pub fn infer_range(records: &[SpeedRecord], tz: Tz) -> Result<WeekRange> {
    let dates = records.iter().map(|r| r.timestamp.with_timezone(&tz).date_naive());
    let (first, last) = dates.fold((None, None), |(lo, hi): (Option<NaiveDate>, Option<NaiveDate>), d| {
        (Some(lo.map_or(d, |x| x.min(d))), Some(hi.map_or(d, |x| x.max(d))))
    });
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::EmptyInput("no speed records".into()));
    };
    let start = first - Duration::days(first.weekday().num_days_from_monday() as i64);
    let weeks = (last - start).num_days() as usize / 7 + 1;
    WeekRange::new(start, weeks)
}

pub fn parse_timezone(name: &str) -> Result<Tz> {
    Tz::from_str(name).map_err(|e| Error::param("timezone", e.to_string()))
}

/// `(week, hour_of_week)` of an instant, or `None` outside the range.
pub fn hour_slot(ts: DateTime<Utc>, range: &WeekRange, tz: Tz) -> Option<(usize, usize)> {
    let local = ts.with_timezone(&tz).naive_local();
    let days = (local.date() - range.start).num_days();
    if days < 0 {
        return None;
    }
    let days = days as usize;
    let week = days / 7;
    if week >= range.weeks {
        return None;
    }
    Some((week, (days % 7) * 24 + local.hour() as usize))
}

/// Start of an hour slot as an instant. A slot that does not exist locally
/// (clocks jumping forward) maps to the instant the jump happens.
pub fn slot_start(range: &WeekRange, tz: Tz, week: usize, hour: usize) -> DateTime<Tz> {
    let naive = range.start.and_hms_opt(0, 0, 0).expect("midnight exists")
        + Duration::hours((week * HOURS_PER_WEEK + hour) as i64);
    match tz.from_local_datetime(&naive).earliest() {
        Some(t) => t,
        None => (1..=48)
            .find_map(|k| tz.from_local_datetime(&(naive + Duration::hours(k))).earliest())
            .expect("local clocks skip less than two days"),
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub range: WeekRange,
    /// Segments observed in fewer than this fraction of cells are dropped.
    pub min_coverage: f64,
    pub timezone: Tz,
}

impl BuildOptions {
    pub fn new(range: WeekRange) -> Self {
        Self {
            range,
            min_coverage: DEFAULT_MIN_COVERAGE,
            timezone: Tz::UTC,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrafficTensor {
    /// Mean speed per (segment, hour-of-week, week); zero where unobserved.
    pub tensor: DenseTensor,
    pub mask: ObservationMask,
    /// Segment ids in axis order (sorted).
    pub segments: Vec<String>,
    pub segment_index: BTreeMap<String, usize>,
    pub dropped_segments: Vec<String>,
    pub range: WeekRange,
    pub timezone: Tz,
    pub observation_ratio: f64,
    /// Records falling outside the week range.
    pub out_of_range: usize,
}

pub fn build_tensor(records: &[SpeedRecord], opts: &BuildOptions) -> Result<TrafficTensor> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no speed records".into()));
    }
    if !(0.0..=1.0).contains(&opts.min_coverage) {
        return Err(Error::param(
            "min_coverage",
            format!("must lie in [0, 1], got {}", opts.min_coverage),
        ));
    }
    let range = opts.range;
    let cells = range.hours();

    // per segment: (sum, count) for every (hour, week) cell
    let mut acc: BTreeMap<&str, Vec<(f64, u32)>> = BTreeMap::new();
    let mut out_of_range = 0;
    for r in records {
        let Some((week, hour)) = hour_slot(r.timestamp, &range, opts.timezone) else {
            out_of_range += 1;
            continue;
        };
        let cell = &mut acc.entry(&r.segment_id).or_insert_with(|| vec![(0.0, 0); cells])[hour + HOURS_PER_WEEK * week];
        cell.0 += r.speed;
        cell.1 += 1;
    }

    let mut kept = Vec::new();
    let mut dropped_segments = Vec::new();
    for (id, sums) in acc {
        let covered = sums.iter().filter(|c| c.1 > 0).count();
        if covered as f64 >= opts.min_coverage * cells as f64 {
            kept.push((id, sums));
        } else {
            dropped_segments.push(id.to_string());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no segment reaches coverage {} within the week range",
            opts.min_coverage
        )));
    }

    let n = kept.len();
    let mut data = vec![0.0; n * cells];
    let mut observed = vec![false; n * cells];
    for (s, (_, sums)) in kept.iter().enumerate() {
        for (c, &(sum, count)) in sums.iter().enumerate() {
            if count > 0 {
                data[s + n * c] = sum / count as f64;
                observed[s + n * c] = true;
            }
        }
    }
    let shape = vec![n, HOURS_PER_WEEK, range.weeks];
    let mask = ObservationMask::new(shape.clone(), observed)?;
    let segments: Vec<String> = kept.iter().map(|(id, _)| id.to_string()).collect();
    Ok(TrafficTensor {
        tensor: DenseTensor::new(shape, data)?,
        observation_ratio: mask.ratio(),
        mask,
        segment_index: segments.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect(),
        segments,
        dropped_segments,
        range,
        timezone: opts.timezone,
        out_of_range,
    })
}

#[derive(Clone, Debug)]
pub struct EventOptions {
    pub solver: SolverConfig,
    /// Solve on per-segment standardized speeds.
    pub standardize: bool,
}

impl EventOptions {
    /// Solver defaults for the tensor's shape with the given λ.
    pub fn for_tensor(tt: &TrafficTensor, lambda: Option<f64>) -> Self {
        let mut solver = SolverConfig::for_shape(tt.tensor.shape(), crate::solver::Regularizer::L21);
        if let Some(l) = lambda {
            solver.lambda = l;
        }
        Self {
            solver,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedHour {
    pub week: usize,
    pub hour: usize,
    /// Local start of the hour, RFC 3339.
    pub timestamp: String,
    pub fiber: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDeviation {
    pub week: usize,
    pub hour: usize,
    pub timestamp: String,
    pub segment_id: String,
    /// `None` where the cell was not observed.
    pub z_score: Option<f64>,
    pub observed_speed: Option<f64>,
    /// Mean of x̂ over the weeks not flagged at this hour; `None` if every week is flagged.
    pub baseline_speed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub converged: bool,
    pub iterations: usize,
    pub lambda: f64,
    pub observation_ratio: f64,
    pub corruption_ratio: f64,
    pub flagged_hours: Vec<FlaggedHour>,
    pub deviations: Vec<SegmentDeviation>,
}

pub const REPORT_CSV_HEADER: &str = "week,hour,timestamp,segment_id,z_score,observed_speed,baseline_speed";

impl EventReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(REPORT_CSV_HEADER.split(','))?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for d in &self.deviations {
            wtr.write_record([
                d.week.to_string(),
                d.hour.to_string(),
                d.timestamp.clone(),
                d.segment_id.clone(),
                opt(d.z_score),
                opt(d.observed_speed),
                opt(d.baseline_speed),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-segment mean and standard deviation over observed cells.
fn segment_moments(tt: &TrafficTensor) -> Vec<(f64, f64)> {
    let n = tt.segments.len();
    let mut stats = vec![(0.0, 0.0, 0usize); n];
    for (l, &x) in tt.tensor.data().iter().enumerate() {
        if tt.mask.is_observed(l) {
            let s = &mut stats[l % n];
            s.0 += x;
            s.1 += x * x;
            s.2 += 1;
        }
    }
    stats
        .into_iter()
        .map(|(sum, sq, k)| {
            if k == 0 {
                return (0.0, 1.0);
            }
            let mean = sum / k as f64;
            let sd = (sq / k as f64 - mean * mean).max(0.0).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Runs the completion solver with the segment axis as outlier mode and
/// scores each flagged hour against the recovered weekly baseline.
pub fn detect_events(tt: &TrafficTensor, opts: &EventOptions) -> Result<(SolverResult, EventReport)> {
    if opts.solver.outlier_mode != 0 {
        return Err(Error::param("outlier_mode", "must be 0, the segment axis"));
    }
    let n = tt.segments.len();
    let weeks = tt.range.weeks;
    let moments = opts.standardize.then(|| segment_moments(tt));
    let b = match &moments {
        Some(m) => DenseTensor::new(
            tt.tensor.shape().to_vec(),
            tt.tensor
                .data()
                .iter()
                .enumerate()
                .map(|(l, &x)| {
                    let (mean, sd) = m[l % n];
                    if tt.mask.is_observed(l) {
                        (x - mean) / sd
                    } else {
                        0.0
                    }
                })
                .collect(),
        )?,
        None => tt.tensor.clone(),
    };
    let result = robust_completion(&b, &tt.mask, &opts.solver)?;
    let x_hat = result.x_hat().data();
    let original = |l: usize| match &moments {
        Some(m) => x_hat[l] * m[l % n].1 + m[l % n].0,
        None => x_hat[l],
    };

    let flagged: Vec<bool> = {
        let mut f = vec![false; HOURS_PER_WEEK * weeks];
        for &j in &result.outlier_fibers {
            f[j] = true;
        }
        f
    };
    let mut flagged_hours = Vec::new();
    let mut deviations = Vec::new();
    for &j in &result.outlier_fibers {
        let (hour, week) = (j % HOURS_PER_WEEK, j / HOURS_PER_WEEK);
        let timestamp = slot_start(&tt.range, tt.timezone, week, hour).to_rfc3339();
        for (s, id) in tt.segments.iter().enumerate() {
            let clean: Vec<f64> = (0..weeks)
                .filter(|&w| !flagged[hour + HOURS_PER_WEEK * w])
                .map(|w| original(s + n * (hour + HOURS_PER_WEEK * w)))
                .collect();
            let (baseline, sd) = mean_and_sample_sd(&clean);
            let l = s + n * j;
            let observed_speed = tt.mask.is_observed(l).then(|| tt.tensor.data()[l]);
            let z_score = match (observed_speed, baseline) {
                (Some(v), Some(m)) => Some(if sd > 0.0 { (v - m) / sd } else { 0.0 }),
                _ => None,
            };
            deviations.push(SegmentDeviation {
                week,
                hour,
                timestamp: timestamp.clone(),
                segment_id: id.clone(),
                z_score,
                observed_speed,
                baseline_speed: baseline,
            });
        }
        flagged_hours.push(FlaggedHour {
            week,
            hour,
            timestamp,
            fiber: j,
        });
    }
    let report = EventReport {
        converged: result.converged,
        iterations: result.iterations,
        lambda: result.lambda,
        observation_ratio: tt.observation_ratio,
        corruption_ratio: result.corruption_ratio(),
        flagged_hours,
        deviations,
    };
    Ok((result, report))
}

fn mean_and_sample_sd(v: &[f64]) -> (Option<f64>, f64) {
    if v.is_empty() {
        return (None, 0.0);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (Some(mean), 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
    (Some(mean), var.sqrt())
}

/// Search bounds for [`lambda_for_target_ratio`].
#[derive(Clone, Copy, Debug)]
pub struct LambdaSearch {
    pub lo: f64,
    pub hi: f64,
    pub max_steps: usize,
    /// Accepted relative distance between achieved and target ratio.
    pub rel_tol: f64,
}

impl LambdaSearch {
    /// Two decades either side of `center`.
    pub fn around(center: f64) -> Self {
        Self {
            lo: center / 100.0,
            hi: center * 100.0,
            max_steps: 12,
            rel_tol: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub ratio: f64,
    pub steps: usize,
    pub within_tolerance: bool,
    pub warning: Option<String>,
}

/// Log-space bisection on λ for a target flagged-hour ratio. Larger λ flags
/// fewer fibers.
pub fn lambda_for_target_ratio(
    tt: &TrafficTensor,
    target: f64,
    opts: &EventOptions,
    search: &LambdaSearch,
) -> Result<LambdaChoice> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param(
            "target_ratio",
            format!("must lie in (0, 1), got {target}"),
        ));
    }
    if !(search.lo > 0.0 && search.lo < search.hi && search.hi.is_finite()) {
        return Err(Error::param("search", "needs 0 < lo < hi < ∞"));
    }
    let ratio_at = |lambda: f64| -> Result<f64> {
        let mut o = opts.clone();
        o.solver.lambda = lambda;
        Ok(detect_events(tt, &o)?.0.corruption_ratio())
    };
    let close = |r: f64| (r - target).abs() <= search.rel_tol * target;
    let choice = |lambda, ratio, steps, warning: Option<String>| LambdaChoice {
        lambda,
        ratio,
        steps,
        within_tolerance: close(ratio),
        warning,
    };

    let p = tt.tensor.len() / tt.tensor.shape()[0];
    if round_half_up(target * p as f64) == 0 {
        return Ok(choice(
            search.hi,
            ratio_at(search.hi)?,
            0,
            Some("target is below one fiber; using the upper bound".into()),
        ));
    }
    let r_hi = ratio_at(search.hi)?;
    if close(r_hi) {
        return Ok(choice(search.hi, r_hi, 0, None));
    }
    if r_hi > target {
        return Ok(choice(
            search.hi,
            r_hi,
            0,
            Some(format!("upper bound λ={} still flags ratio {r_hi}", search.hi)),
        ));
    }
    let r_lo = ratio_at(search.lo)?;
    if close(r_lo) {
        return Ok(choice(search.lo, r_lo, 0, None));
    }
    if r_lo < target {
        return Ok(choice(
            search.lo,
            r_lo,
            0,
            Some(format!("lower bound λ={} only flags ratio {r_lo}", search.lo)),
        ));
    }

    let (mut lo, mut hi) = (search.lo, search.hi);
    let mut best = if (r_lo - target).abs() < (r_hi - target).abs() {
        (search.lo, r_lo)
    } else {
        (search.hi, r_hi)
    };
    for step in 1..=search.max_steps {
        let mid = (lo * hi).sqrt();
        let r = ratio_at(mid)?;
        if (r - target).abs() < (best.1 - target).abs() {
            best = (mid, r);
        }
        if close(r) {
            return Ok(choice(mid, r, step, None));
        }
        if r > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(choice(
        best.0,
        best.1,
        search.max_steps,
        Some(format!("no λ within tolerance after {} steps", search.max_steps)),
    ))
}

/// Synthetic traffic feed with known disrupted hours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficFixtureSpec {
    pub segments: usize,
    pub weeks: usize,
    pub start: NaiveDate,
    /// Fraction of (segment, hour, week) cells without a record.
    pub missing: f64,
    /// Fraction of hours in which every segment is disrupted.
    pub anomaly_fraction: f64,
    /// Added to every segment's speed in a disrupted hour.
    pub shift: f64,
    pub seed: u64,
}

impl TrafficFixtureSpec {
    /// 556 segments over 17 weeks from 2018-01-01, 20% of cells missing and
    /// 1% of hours slowed by 20.
    pub fn nashville(seed: u64) -> Self {
        Self {
            segments: 556,
            weeks: 17,
            start: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            missing: 0.2,
            anomaly_fraction: 0.01,
            shift: -20.0,
            seed,
        }
    }

    pub fn range(&self) -> Result<WeekRange> {
        WeekRange::new(self.start, self.weeks)
    }

    pub fn generate(&self) -> Result<TrafficFixture> {
        let range = self.range()?;
        if self.segments == 0 {
            return Err(Error::param("segments", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.missing) {
            return Err(Error::param(
                "missing",
                format!("must lie in [0, 1), got {}", self.missing),
            ));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return Err(Error::param("anomaly_fraction", "must lie in [0, 1]"));
        }
        let (n, hours) = (self.segments, range.hours());
        let mut rng = stream_rng(self.seed, 0);
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(45.0..70.0)).collect();
        let commute: Vec<f64> = (0..n).map(|_| rng.gen_range(5.0..20.0)).collect();
        let weekend: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..8.0)).collect();
        let week_factor: Vec<f64> = (0..self.weeks).map(|w| 1.0 + 0.15 * (0.9 * w as f64).sin()).collect();
        let clean = DenseTensor::from_fn(&[n, HOURS_PER_WEEK, self.weeks], |ix| {
            let (s, h, w) = (ix[0], ix[1], ix[2]);
            base[s] - commute[s] * commute_profile(h) * week_factor[w] - weekend[s] * weekend_profile(h)
        })?;

        let k = round_half_up(self.anomaly_fraction * hours as f64).min(hours);
        let mut planted = index::sample(&mut stream_rng(self.seed, 1), hours, k).into_vec();
        planted.sort_unstable();
        let mut speeds = clean.clone();
        let data = speeds.data_mut();
        for &j in &planted {
            for x in &mut data[j * n..(j + 1) * n] {
                *x = (*x + self.shift).max(0.0);
            }
        }
        let mask = sample_mask(
            &[n, HOURS_PER_WEEK, self.weeks],
            1.0 - self.missing,
            &mut stream_rng(self.seed, 2),
        )?;

        let ids: Vec<String> = (0..n).map(|s| format!("seg{s:04}")).collect();
        let mut records = Vec::with_capacity(mask.observed_count());
        for c in 0..hours {
            let (hour, week) = (c % HOURS_PER_WEEK, c / HOURS_PER_WEEK);
            let at = slot_start(&range, Tz::UTC, week, hour).with_timezone(&Utc) + Duration::minutes(30);
            for (s, id) in ids.iter().enumerate() {
                let l = s + n * c;
                if mask.is_observed(l) {
                    records.push(SpeedRecord {
                        segment_id: id.clone(),
                        timestamp: at,
                        speed: speeds.data()[l],
                    });
                }
            }
        }
        Ok(TrafficFixture {
            records,
            planted_hours: planted,
            clean,
            range,
        })
    }
}

fn commute_profile(h: usize) -> f64 {
    let (day, t) = (h / 24, (h % 24) as f64);
    if day >= 5 {
        return 0.0;
    }
    (-(t - 8.0).powi(2) / 3.0).exp() + (-(t - 17.5).powi(2) / 4.0).exp()
}

fn weekend_profile(h: usize) -> f64 {
    let (day, t) = (h / 24, (h % 24) as f64);
    if day < 5 {
        return 0.0;
    }
    (-(t - 14.0).powi(2) / 12.0).exp()
}

#[derive(Clone, Debug)]
pub struct TrafficFixture {
    pub records: Vec<SpeedRecord>,
    /// Disrupted fibers, `hour + 168·week`, ascending.
    pub planted_hours: Vec<usize>,
    /// Undisrupted speeds for every cell.
    pub clean: DenseTensor,
    pub range: WeekRange,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()
    }

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn timestamps() {
        assert_eq!(ts("2018-01-01T05:00:00Z"), ts("2018-01-01T00:00:00-05:00"));
        assert_eq!(ts("2018-01-01T05:00:00"), ts("2018-01-01 05:00:00"));
        assert_eq!(ts("2018-01-01T05:00:00.5Z").timestamp_subsec_millis(), 500);
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn week_range_requires_monday() {
        assert!(WeekRange::new(monday(), 1).is_ok());
        assert!(WeekRange::new(monday().succ_opt().unwrap(), 1).is_err());
        assert!(WeekRange::new(monday(), 0).is_err());
    }

    #[test]
    fn hour_slots() {
        let r = WeekRange::new(monday(), 2).unwrap();
        assert_eq!(hour_slot(ts("2018-01-01T00:00:00Z"), &r, Tz::UTC), Some((0, 0)));
        assert_eq!(hour_slot(ts("2018-01-07T23:59:59Z"), &r, Tz::UTC), Some((0, 167)));
        assert_eq!(hour_slot(ts("2018-01-08T00:00:00Z"), &r, Tz::UTC), Some((1, 0)));
        assert_eq!(hour_slot(ts("2018-01-15T00:00:00Z"), &r, Tz::UTC), None);
        assert_eq!(hour_slot(ts("2017-12-31T23:00:00Z"), &r, Tz::UTC), None);
        let chicago = parse_timezone("America/Chicago").unwrap();
        // 06:00 UTC is midnight in Chicago (UTC−6 in January)
        assert_eq!(hour_slot(ts("2018-01-01T06:00:00Z"), &r, chicago), Some((0, 0)));
        assert_eq!(hour_slot(ts("2018-01-01T05:00:00Z"), &r, chicago), None);
        assert_eq!(
            slot_start(&r, chicago, 0, 0).with_timezone(&Utc),
            ts("2018-01-01T06:00:00Z")
        );
    }

    #[test]
    fn infers_range() {
        let recs: Vec<SpeedRecord> = ["2018-01-03T10:00:00Z", "2018-01-15T00:00:00Z"]
            .iter()
            .map(|t| SpeedRecord {
                segment_id: "a".into(),
                timestamp: ts(t),
                speed: 1.0,
            })
            .collect();
        assert_eq!(
            infer_range(&recs, Tz::UTC).unwrap(),
            WeekRange::new(monday(), 3).unwrap()
        );
        assert!(infer_range(&[], Tz::UTC).is_err());
    }

    #[test]
    fn nonexistent_local_hour() {
        // 2018-03-11 02:00 does not exist in Chicago; week 9, Sunday
        let r = WeekRange::new(monday(), 11).unwrap();
        let chicago = parse_timezone("America/Chicago").unwrap();
        let t = slot_start(&r, chicago, 9, 6 * 24 + 2);
        assert_eq!(t.with_timezone(&Utc), ts("2018-03-11T08:00:00Z"));
    }

    #[test]
    fn reads_csv_strict_and_lenient() {
        let text = "segment_id,timestamp_iso8601,speed\n\
                    a,2018-01-01T00:10:00Z,50\n\
                    b,not-a-time,40\n\
                    c,2018-01-01T00:10:00Z,-1\n\
                    d,2018-01-01T00:10:00Z\n";
        let err = read_speed_records(text.as_bytes(), true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let got = read_speed_records(text.as_bytes(), false).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.skipped.iter().map(|e| e.line).collect::<Vec<_>>(), vec![3, 4, 5]);
        assert!(read_speed_records("seg,ts,speed\n".as_bytes(), false).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let recs = vec![SpeedRecord {
            segment_id: "x".into(),
            timestamp: ts("2018-01-02T03:30:00Z"),
            speed: 41.25,
        }];
        let mut buf = Vec::new();
        write_speed_records(&mut buf, &recs).unwrap();
        assert_eq!(read_speed_records(&buf[..], true).unwrap().records, recs);
    }

    #[test]
    fn builds_tensor_with_means_and_coverage() {
        let r = WeekRange::new(monday(), 1).unwrap();
        let mut recs = Vec::new();
        for h in 0..HOURS_PER_WEEK {
            let at = slot_start(&r, Tz::UTC, 0, h).with_timezone(&Utc);
            recs.push(SpeedRecord {
                segment_id: "b".into(),
                timestamp: at,
                speed: h as f64,
            });
            recs.push(SpeedRecord {
                segment_id: "a".into(),
                timestamp: at,
                speed: 1.0,
            });
        }
        recs.push(SpeedRecord {
            segment_id: "a".into(),
            timestamp: recs[1].timestamp,
            speed: 3.0,
        });
        recs.push(SpeedRecord {
            segment_id: "sparse".into(),
            timestamp: recs[0].timestamp,
            speed: 9.0,
        });
        recs.push(SpeedRecord {
            segment_id: "a".into(),
            timestamp: ts("2019-01-01T00:00:00Z"),
            speed: 9.0,
        });
        let tt = build_tensor(&recs, &BuildOptions::new(r)).unwrap();
        assert_eq!(tt.tensor.shape(), &[2, 168, 1]);
        assert_eq!(tt.segments, vec!["a", "b"]);
        assert_eq!(tt.dropped_segments, vec!["sparse"]);
        assert_eq!(tt.out_of_range, 1);
        assert_eq!(tt.observation_ratio, 1.0);
        assert_eq!(tt.tensor.get(&[0, 0, 0]), Some(2.0));
        assert_eq!(tt.tensor.get(&[1, 7, 0]), Some(7.0));
        assert!(build_tensor(&[], &BuildOptions::new(r)).is_err());
    }

    #[test]
    fn fixture_shape_and_plant() {
        let spec = TrafficFixtureSpec {
            segments: 12,
            weeks: 3,
            ..TrafficFixtureSpec::nashville(5)
        };
        let fx = spec.generate().unwrap();
        assert_eq!(fx.planted_hours.len(), 5); // round(0.01 · 504)
        assert_eq!(fx.records.len(), 12 * 504 - round_half_up(0.2 * 12.0 * 504.0));
        assert!(fx.records.iter().all(|r| r.speed >= 0.0));
        let tt = build_tensor(&fx.records, &BuildOptions::new(fx.range)).unwrap();
        assert!((tt.observation_ratio - 0.8).abs() < 1e-3);
        let j = fx.planted_hours[0];
        for s in 0..12 {
            let l = s + 12 * j;
            if tt.mask.is_observed(l) {
                assert!((tt.tensor.data()[l] - (fx.clean.data()[l] - 20.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_sd() {
        assert_eq!(mean_and_sample_sd(&[]), (None, 0.0));
        assert_eq!(mean_and_sample_sd(&[3.0]), (Some(3.0), 0.0));
        let (m, sd) = mean_and_sample_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
