//! Seeded experiment sweeps: per-run simulation, run files, and percentile
//! aggregation.
//!
//! Output layout under `output_dir`:
//!
//! - `curves/<run_id>.csv`: `run_id,algorithm,alpha,t,cost_regret,quality_regret`
//! - `events/<run_id>.csv`: `run_id,t,arm,kind` (COF variants)
//! - `final_counts.csv`: `run_id,algorithm,alpha,seed,arm,count`
//! - `aggregate.csv`: mean and p20/p50/p80 per `(algorithm, alpha, t)`
//! - `terminal.csv`: one row of final regrets per run
//!
//! Arms are 1-based in every file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{build_baseline, BaselineConfig, BaselineKind};
use crate::cof::{CofConfig, CofDiagnostics, CofPolicy, EpisodeEvent};
use crate::instance::{analyze, parse_instance, BanditInstance, InstanceError};
use crate::metrics::{log_checkpoint_grid, Checkpoint, RegretAccumulator};
use crate::policy::{Algorithm, Policy};
use crate::sampler::{RewardEnvironment, SamplerError, Tolerance};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("run failed ({algorithm}, alpha={alpha}, run={run}): {reason}")]
    RunFailed {
        algorithm: Algorithm,
        alpha: f64,
        run: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    BadTraceFile { path: PathBuf, reason: String },
    #[error("checkpoint grids differ between runs of {algorithm} at alpha={alpha}")]
    GridMismatch { algorithm: String, alpha: String },
    #[error("no curve files found under {0}")]
    NoTraces(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn default_checkpoints() -> usize {
    200
}

fn default_budget() -> f64 {
    0.2
}

/// A sweep description, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance_path: PathBuf,
    pub algorithms: Vec<Algorithm>,
    pub alphas: Vec<f64>,
    pub horizon: u64,
    pub num_runs: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub delta_override: Option<f64>,
    #[serde(default = "default_checkpoints")]
    pub checkpoint_count: usize,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_budget")]
    pub etc_budget_fraction: f64,
}

impl ExperimentConfig {
    /// Parses a config; relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, RunnerError> {
        let mut config: Self =
            serde_json::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        if config.instance_path.is_relative() {
            config.instance_path = base_dir.join(&config.instance_path);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base_dir.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self, num_arms: usize) -> Result<(), RunnerError> {
        let fail = |m: String| Err(RunnerError::Config(m));
        if self.algorithms.is_empty() {
            return fail("algorithms must be non-empty".into());
        }
        if self.alphas.is_empty() {
            return fail("alphas must be non-empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return fail(format!("alpha {a} outside (0, 1)"));
        }
        if self.horizon < num_arms as u64 {
            return fail(format!(
                "horizon {} below the number of arms {num_arms}",
                self.horizon
            ));
        }
        if self.num_runs == 0 {
            return fail("num_runs must be at least 1".into());
        }
        if !(self.etc_budget_fraction > 0.0 && self.etc_budget_fraction < 1.0) {
            return fail("etc_budget_fraction must lie in (0, 1)".into());
        }
        if let Some(d) = self.delta_override {
            if !(d > 0.0 && d < 1.0) {
                return fail(format!("delta_override {d} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

const SEED_TAG_ALGORITHM: u64 = 0xa1;
const SEED_TAG_ALPHA: u64 = 0xa2;
const SEED_TAG_RUN: u64 = 0xa3;

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Per-run seed. Starting from `mix64(master)`, each component is absorbed
/// as `h = mix64(h ^ mix64(tag ^ value))`, where the algorithm contributes
/// the FNV-1a hash of its name and alpha its IEEE-754 bits.
pub fn derive_seed(master_seed: u64, algorithm: Algorithm, alpha: f64, run_index: u64) -> u64 {
    let absorb = |h: u64, tag: u64, v: u64| mix64(h ^ mix64(tag ^ v.rotate_left(8)));
    let h = mix64(master_seed);
    let h = absorb(h, SEED_TAG_ALGORITHM, fnv1a(algorithm.name().as_bytes()));
    let h = absorb(h, SEED_TAG_ALPHA, alpha.to_bits());
    absorb(h, SEED_TAG_RUN, run_index)
}

/// Everything recorded about one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub run_index: usize,
    pub seed: u64,
    pub horizon: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub final_counts: Vec<u64>,
    pub events: Vec<EpisodeEvent>,
    pub cof_diagnostics: Option<CofDiagnostics>,
    pub decomposition_mismatches: u64,
}

impl RunTrace {
    pub fn final_cost(&self) -> f64 {
        self.checkpoints.last().map_or(0.0, |c| c.cost_regret)
    }

    pub fn final_quality(&self) -> f64 {
        self.checkpoints.last().map_or(0.0, |c| c.quality_regret)
    }

    /// Time of the first `deemed_feasible` event, if any.
    pub fn feasible_time(&self) -> Option<u64> {
        self.events
            .iter()
            .find(|e| e.kind == crate::cof::Verdict::DeemedFeasible)
            .map(|e| e.time)
    }
}

pub fn run_id(algorithm: Algorithm, alpha: f64, run_index: usize) -> String {
    format!("{}-a{}-r{:04}", algorithm.name(), alpha, run_index)
}

/// Parameters of a single run.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub instance: &'a BanditInstance,
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub seed: u64,
    pub delta: f64,
    pub grid: &'a [u64],
    pub etc_budget_fraction: f64,
    pub run_index: usize,
}

enum AnyPolicy {
    Cof(Box<CofPolicy>),
    Other(Box<dyn Policy>),
}

impl AnyPolicy {
    fn as_policy(&mut self) -> &mut dyn Policy {
        match self {
            AnyPolicy::Cof(p) => p.as_mut(),
            AnyPolicy::Other(p) => p.as_mut(),
        }
    }
}

/// Simulates one run. `spec.instance` already carries the run's alpha.
pub fn run_single(spec: &RunSpec<'_>) -> Result<RunTrace, RunnerError> {
    let inst = spec.instance;
    let alpha = inst.alpha();
    let k = inst.num_arms();
    let analysis = analyze(inst);
    let mut policy = match spec.algorithm {
        Algorithm::Cof | Algorithm::CofNoExclusive | Algorithm::CofNoCombine => {
            let config = CofConfig {
                delta: spec.delta,
                combine_samples: spec.algorithm != Algorithm::CofNoCombine,
                exclusive_sampling: spec.algorithm != Algorithm::CofNoExclusive,
            };
            AnyPolicy::Cof(Box::new(CofPolicy::new(k, alpha, config)?))
        }
        other => {
            let kind = match other {
                Algorithm::EtcCs => BaselineKind::EtcCs,
                Algorithm::UcbCs => BaselineKind::UcbCs,
                Algorithm::TsCs => BaselineKind::TsCs,
                _ => BaselineKind::PeCs,
            };
            let config = BaselineConfig {
                kind,
                etc_budget_fraction: spec.etc_budget_fraction,
                delta: spec.delta,
            };
            AnyPolicy::Other(build_baseline(&config, k, alpha, spec.horizon, spec.seed)?)
        }
    };
    let mut env = RewardEnvironment::new(inst, spec.seed);
    let mut acc = RegretAccumulator::new(&analysis, spec.grid.to_vec());
    {
        let p = policy.as_policy();
        for t in 0..spec.horizon {
            let arm = p.next_arm(t);
            acc.record(arm);
            let reward = env.sample(arm);
            p.observe(arm, reward);
        }
    }
    let (events, cof_diagnostics) = match &policy {
        AnyPolicy::Cof(p) => (p.events().to_vec(), Some(*p.diagnostics())),
        AnyPolicy::Other(_) => (Vec::new(), None),
    };
    Ok(RunTrace {
        run_id: run_id(spec.algorithm, alpha, spec.run_index),
        algorithm: spec.algorithm,
        alpha,
        run_index: spec.run_index,
        seed: spec.seed,
        horizon: spec.horizon,
        final_counts: acc.counts().to_vec(),
        decomposition_mismatches: acc.decomposition_mismatches(),
        checkpoints: acc.into_checkpoints(),
        events,
        cof_diagnostics,
    })
}

/// Default tolerance `K^2/T^2`, or the override.
pub fn run_delta(num_arms: usize, horizon: u64, delta_override: Option<f64>) -> f64 {
    delta_override.unwrap_or_else(|| {
        Tolerance::for_horizon(num_arms, horizon)
            .map(|t| t.delta())
            .unwrap_or(f64::MIN_POSITIVE)
    })
}

/// Runs every `(algorithm, alpha, run)` combination of an in-memory
/// instance without touching the filesystem. Results are ordered by
/// algorithm, then alpha, then run index, independent of `workers`.
pub fn simulate_traces(
    instance: &BanditInstance,
    config: &ExperimentConfig,
) -> Result<Vec<RunTrace>, RunnerError> {
    config.validate(instance.num_arms())?;
    let grid = log_checkpoint_grid(config.horizon, config.checkpoint_count);
    let delta = run_delta(instance.num_arms(), config.horizon, config.delta_override);
    let mut jobs = Vec::new();
    for &algorithm in &config.algorithms {
        for &alpha in &config.alphas {
            let inst = instance.with_alpha(alpha)?;
            for run in 0..config.num_runs {
                jobs.push((algorithm, inst.clone(), run));
            }
        }
    }
    let execute = || {
        jobs.par_iter()
            .map(|(algorithm, inst, run)| {
                let spec = RunSpec {
                    instance: inst,
                    algorithm: *algorithm,
                    horizon: config.horizon,
                    seed: derive_seed(config.master_seed, *algorithm, inst.alpha(), *run as u64),
                    delta,
                    grid: &grid,
                    etc_budget_fraction: config.etc_budget_fraction,
                    run_index: *run,
                };
                run_single(&spec).map_err(|e| RunnerError::RunFailed {
                    algorithm: *algorithm,
                    alpha: inst.alpha(),
                    run: *run,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| RunnerError::Config(e.to_string()))?
            .install(execute),
        None => execute(),
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub traces: Vec<RunTrace>,
    pub aggregate: Vec<AggregateRow>,
    pub files_written: usize,
}

/// Loads the instance, runs the sweep and writes every output file.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepSummary, RunnerError> {
    let path = &config.instance_path;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parsed = parse_instance(&text)?;
    if parsed.resorted {
        log::warn!(
            "{}: arms were not in cost order and have been re-sorted",
            path.display()
        );
    }
    let traces = simulate_traces(&parsed.instance, config)?;
    let files_written = write_traces(&config.output_dir, &traces)?;
    let curves: Vec<CurveSeries> = traces.iter().map(CurveSeries::from_trace).collect();
    let aggregate = aggregate_series(&curves)?;
    write_aggregate(&config.output_dir, &curves, &aggregate)?;
    Ok(SweepSummary {
        traces,
        aggregate,
        files_written: files_written + 2,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunnerError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub fn curve_csv(trace: &RunTrace) -> String {
    let mut out = String::from("run_id,algorithm,alpha,t,cost_regret,quality_regret\n");
    for cp in &trace.checkpoints {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            trace.run_id, trace.algorithm, trace.alpha, cp.t, cp.cost_regret, cp.quality_regret
        );
    }
    out
}

pub fn events_csv(trace: &RunTrace) -> String {
    let mut out = String::from("run_id,t,arm,kind\n");
    for e in &trace.events {
        let _ = writeln!(out, "{},{},{},{}", trace.run_id, e.time, e.arm + 1, e.kind);
    }
    out
}

/// Writes curve, event and count files; returns the number of files.
pub fn write_traces(dir: &Path, traces: &[RunTrace]) -> Result<usize, RunnerError> {
    let mut written = 0;
    let mut counts = String::from("run_id,algorithm,alpha,seed,arm,count\n");
    for trace in traces {
        write_file(
            &dir.join("curves").join(format!("{}.csv", trace.run_id)),
            &curve_csv(trace),
        )?;
        written += 1;
        if trace.algorithm.is_cof() {
            write_file(
                &dir.join("events").join(format!("{}.csv", trace.run_id)),
                &events_csv(trace),
            )?;
            written += 1;
        }
        for (arm, n) in trace.final_counts.iter().enumerate() {
            let _ = writeln!(
                counts,
                "{},{},{},{},{},{}",
                trace.run_id,
                trace.algorithm,
                trace.alpha,
                trace.seed,
                arm + 1,
                n
            );
        }
    }
    write_file(&dir.join("final_counts.csv"), &counts)?;
    Ok(written + 1)
}

/// A regret curve keyed by strings, as read back from a curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub run_id: String,
    pub algorithm: String,
    pub alpha: String,
    pub points: Vec<Checkpoint>,
}

impl CurveSeries {
    pub fn from_trace(trace: &RunTrace) -> Self {
        Self {
            run_id: trace.run_id.clone(),
            algorithm: trace.algorithm.name().to_string(),
            alpha: trace.alpha.to_string(),
            points: trace.checkpoints.clone(),
        }
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self, RunnerError> {
        let bad = |reason: String| RunnerError::BadTraceFile {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some("run_id,algorithm,alpha,t,cost_regret,quality_regret") {
            return Err(bad("missing curve header".into()));
        }
        let mut series: Option<CurveSeries> = None;
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("line {}: expected 6 fields", i + 2)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: bad number `{s}`", i + 2)))
            };
            let t = f[3]
                .parse::<u64>()
                .map_err(|_| bad(format!("line {}: bad t `{}`", i + 2, f[3])))?;
            let cp = Checkpoint {
                t,
                cost_regret: num(f[4])?,
                quality_regret: num(f[5])?,
            };
            let s = series.get_or_insert_with(|| CurveSeries {
                run_id: f[0].to_string(),
                algorithm: f[1].to_string(),
                alpha: f[2].to_string(),
                points: Vec::new(),
            });
            if s.run_id != f[0] || s.algorithm != f[1] || s.alpha != f[2] {
                return Err(bad(format!("line {}: mixed runs in one file", i + 2)));
            }
            s.points.push(cp);
        }
        series.ok_or_else(|| bad("no checkpoints".into()))
    }
}

/// Summary statistics of one quantity across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub mean: f64,
    pub p20: f64,
    pub p50: f64,
    pub p80: f64,
}

/// Linear interpolation between order statistics at rank `(n-1) q`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p20: percentile(&sorted, 0.2),
            p50: percentile(&sorted, 0.5),
            p80: percentile(&sorted, 0.8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub alpha: String,
    pub t: u64,
    pub runs: usize,
    pub cost: Band,
    pub quality: Band,
    pub total: Band,
}

fn group_key(s: &CurveSeries) -> (String, u64) {
    let alpha_bits = s.alpha.parse::<f64>().map(f64::to_bits).unwrap_or(u64::MAX);
    (s.algorithm.clone(), alpha_bits)
}

fn grouped(series: &[CurveSeries]) -> BTreeMap<(String, u64), Vec<&CurveSeries>> {
    let mut groups: BTreeMap<(String, u64), Vec<&CurveSeries>> = BTreeMap::new();
    for s in series {
        groups.entry(group_key(s)).or_default().push(s);
    }
    for runs in groups.values_mut() {
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    }
    groups
}

/// Per `(algorithm, alpha, t)` bands over runs. Runs in a group must share
/// the checkpoint grid.
pub fn aggregate_series(series: &[CurveSeries]) -> Result<Vec<AggregateRow>, RunnerError> {
    let mut rows = Vec::new();
    for runs in grouped(series).values() {
        let first = runs[0];
        let grid: Vec<u64> = first.points.iter().map(|p| p.t).collect();
        if runs.iter().any(|r| {
            r.points.len() != grid.len() || r.points.iter().zip(&grid).any(|(p, &t)| p.t != t)
        }) {
            return Err(RunnerError::GridMismatch {
                algorithm: first.algorithm.clone(),
                alpha: first.alpha.clone(),
            });
        }
        for (j, &t) in grid.iter().enumerate() {
            let cost: Vec<f64> = runs.iter().map(|r| r.points[j].cost_regret).collect();
            let quality: Vec<f64> = runs.iter().map(|r| r.points[j].quality_regret).collect();
            let total: Vec<f64> = cost.iter().zip(&quality).map(|(c, q)| c + q).collect();
            rows.push(AggregateRow {
                algorithm: first.algorithm.clone(),
                alpha: first.alpha.clone(),
                t,
                runs: runs.len(),
                cost: Band::of(&cost),
                quality: Band::of(&quality),
                total: Band::of(&total),
            });
        }
    }
    Ok(rows)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "algorithm,alpha,t,runs,cost_mean,cost_p20,cost_p50,cost_p80,quality_mean,quality_p20,quality_p50,quality_p80,total_mean,total_p20,total_p50,total_p80\n",
    );
    for r in rows {
        let _ = write!(out, "{},{},{},{}", r.algorithm, r.alpha, r.t, r.runs);
        for b in [&r.cost, &r.quality, &r.total] {
            let _ = write!(out, ",{},{},{},{}", b.mean, b.p20, b.p50, b.p80);
        }
        out.push('\n');
    }
    out
}

/// One row per run with its terminal regrets.
pub fn terminal_csv(series: &[CurveSeries]) -> String {
    let mut out =
        String::from("run_id,algorithm,alpha,t,cost_regret,quality_regret,total_regret\n");
    for runs in grouped(series).values() {
        for r in runs {
            if let Some(p) = r.points.last() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.run_id,
                    r.algorithm,
                    r.alpha,
                    p.t,
                    p.cost_regret,
                    p.quality_regret,
                    p.cost_regret + p.quality_regret
                );
            }
        }
    }
    out
}

fn write_aggregate(
    dir: &Path,
    series: &[CurveSeries],
    rows: &[AggregateRow],
) -> Result<(), RunnerError> {
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(rows))?;
    write_file(&dir.join("terminal.csv"), &terminal_csv(series))
}

/// Reads `dir/curves/*.csv`, then writes `aggregate.csv` and `terminal.csv`
/// into `dir`.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<AggregateRow>, RunnerError> {
    let curves_dir = dir.join("curves");
    let mut paths: Vec<PathBuf> = fs::read_dir(&curves_dir)
        .map_err(io_err(&curves_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(RunnerError::NoTraces(curves_dir));
    }
    let series = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            CurveSeries::parse(p, &text)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = aggregate_series(&series)?;
    write_aggregate(dir, &series, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn two_arm() -> BanditInstance {
        BanditInstance::new(vec![0.4, 0.8], vec![1.0, 2.0], 0.3).unwrap()
    }

    fn config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            instance_path: dir.join("inst.txt"),
            algorithms: vec![Algorithm::Cof, Algorithm::UcbCs],
            alphas: vec![0.3, 0.5],
            horizon: 2000,
            num_runs: 3,
            master_seed: 7,
            delta_override: None,
            checkpoint_count: 20,
            output_dir: dir.join("out"),
            workers: Some(1),
            etc_budget_fraction: 0.2,
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = derive_seed(1, Algorithm::Cof, 0.3, 5);
        assert_eq!(a, derive_seed(1, Algorithm::Cof, 0.3, 5));
        assert_ne!(a, derive_seed(1, Algorithm::Cof, 0.3, 6));
        assert_ne!(a, derive_seed(1, Algorithm::CofNoCombine, 0.3, 5));
        assert_ne!(a, derive_seed(1, Algorithm::Cof, 0.30000000000000004, 5));
        assert_ne!(a, derive_seed(2, Algorithm::Cof, 0.3, 5));
    }

    #[test]
    fn seed_collision_scan() {
        let mut seen = HashSet::with_capacity(1 << 20);
        let mut collisions = 0;
        for run in 0..1_000_000u64 {
            if !seen.insert(derive_seed(42, Algorithm::Cof, 0.3, run)) {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn smallest_run_accounts_every_sample() {
        let inst = two_arm();
        let grid = log_checkpoint_grid(100, 10);
        let trace = run_single(&RunSpec {
            instance: &inst,
            algorithm: Algorithm::Cof,
            horizon: 100,
            seed: 1,
            delta: run_delta(2, 100, None),
            grid: &grid,
            etc_budget_fraction: 0.2,
            run_index: 0,
        })
        .unwrap();
        assert_eq!(trace.final_counts.iter().sum::<u64>(), 100);
        assert_eq!(trace.checkpoints.last().unwrap().t, 100);
        assert_eq!(trace.decomposition_mismatches, 0);
    }

    #[test]
    fn percentile_interpolation() {
        assert_eq!(percentile(&[0.0, 10.0], 0.5), 5.0);
        assert_eq!(
            Band::of(&[3.0]),
            Band {
                mean: 3.0,
                p20: 3.0,
                p50: 3.0,
                p80: 3.0
            }
        );
        let b = Band::of(&[10.0, 0.0]);
        assert_eq!((b.mean, b.p50), (5.0, 5.0));
        assert!((percentile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.2) - 0.8).abs() < 1e-15);
        let constant = vec![2.5; 50];
        assert_eq!(
            Band::of(&constant),
            Band {
                mean: 2.5,
                p20: 2.5,
                p50: 2.5,
                p80: 2.5
            }
        );
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"instance_path":"i.txt","algorithms":["cof"],"alphas":[0.3],"horizon":10,
            "num_runs":1,"master_seed":1,"output_dir":"o","bogus":1}"#;
        assert!(matches!(
            ExperimentConfig::from_json(text, Path::new("/tmp")),
            Err(RunnerError::Config(_))
        ));
        let ok = text.replace(r#","bogus":1"#, "");
        let c = ExperimentConfig::from_json(&ok, Path::new("/base")).unwrap();
        assert_eq!(c.instance_path, Path::new("/base/i.txt"));
        assert_eq!(c.checkpoint_count, 200);
        assert!(c.delta_override.is_none());
    }

    #[test]
    fn config_validation() {
        let dir = Path::new("/nonexistent");
        let inst = two_arm();
        let mut c = config(dir);
        c.horizon = 1;
        assert!(simulate_traces(&inst, &c).is_err());
        let mut c = config(dir);
        c.alphas = vec![1.0];
        assert!(simulate_traces(&inst, &c).is_err());
        let mut c = config(dir);
        c.num_runs = 0;
        assert!(simulate_traces(&inst, &c).is_err());
    }

    #[test]
    fn sweep_writes_and_reaggregates() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("inst.txt"), two_arm().to_file_string()).unwrap();
        let c = config(tmp.path());
        let summary = run_sweep(&c).unwrap();
        assert_eq!(summary.traces.len(), 12);
        let out = &c.output_dir;
        assert_eq!(fs::read_dir(out.join("curves")).unwrap().count(), 12);
        assert_eq!(fs::read_dir(out.join("events")).unwrap().count(), 6);
        let direct = fs::read_to_string(out.join("aggregate.csv")).unwrap();
        let rows = aggregate_dir(out).unwrap();
        assert_eq!(rows, summary.aggregate);
        assert_eq!(
            fs::read_to_string(out.join("aggregate.csv")).unwrap(),
            direct
        );
    }

    #[test]
    fn aggregate_of_singletons_is_idempotent() {
        let inst = two_arm();
        let c = config(Path::new("/unused"));
        let traces = simulate_traces(&inst, &c).unwrap();
        let series: Vec<CurveSeries> = traces.iter().map(CurveSeries::from_trace).collect();
        let direct = aggregate_series(&series).unwrap();
        let singles: Vec<CurveSeries> = series
            .iter()
            .map(|s| {
                let rows = aggregate_series(std::slice::from_ref(s)).unwrap();
                CurveSeries {
                    points: rows
                        .iter()
                        .map(|r| Checkpoint {
                            t: r.t,
                            cost_regret: r.cost.mean,
                            quality_regret: r.quality.mean,
                        })
                        .collect(),
                    ..s.clone()
                }
            })
            .collect();
        assert_eq!(aggregate_series(&singles).unwrap(), direct);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let mk = |run: &str, ts: &[u64]| CurveSeries {
            run_id: run.into(),
            algorithm: "cof".into(),
            alpha: "0.3".into(),
            points: ts
                .iter()
                .map(|&t| Checkpoint {
                    t,
                    cost_regret: 0.0,
                    quality_regret: 0.0,
                })
                .collect(),
        };
        let err = aggregate_series(&[mk("a", &[1, 10]), mk("b", &[1, 20])]).unwrap_err();
        assert!(matches!(err, RunnerError::GridMismatch { .. }));
    }

    #[test]
    fn curve_file_round_trip() {
        let inst = two_arm();
        let traces = simulate_traces(&inst, &config(Path::new("/unused"))).unwrap();
        let text = curve_csv(&traces[0]);
        let parsed = CurveSeries::parse(Path::new("x.csv"), &text).unwrap();
        assert_eq!(parsed, CurveSeries::from_trace(&traces[0]));
    }
}
