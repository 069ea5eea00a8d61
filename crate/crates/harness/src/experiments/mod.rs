//! The experiment catalog and shared measurement plumbing.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use brg_core::analysis::kl::{kl_knn, KnnKl, StateSample};
use brg_core::analysis::stats::{geometric_mean, mean};
use brg_core::body::Body;
use brg_core::game::OpponentSchedule;
use brg_core::rng::derive_seed;
use brg_core::sim::{run_simulation, AgentSpec, SimOptions, SimulationTrace};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::{prepare_out_dir, write_atomic, CellFailure, CsvTable, Provenance, Summary, SCHEMA_VERSION};

mod e1;
mod e10;
mod e2;
mod e3;
mod e4;
mod e5;
mod e6;
mod e7;
mod e8;
mod e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    E10,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
        ExperimentId::E6,
        ExperimentId::E7,
        ExperimentId::E8,
        ExperimentId::E9,
        ExperimentId::E10,
    ];

    pub fn number(self) -> u64 {
        self as u64 + 1
    }

    /// Exact header of `E<k>_grid.csv`.
    pub fn grid_columns(self) -> &'static [&'static str] {
        match self {
            ExperimentId::E1 => e1::GRID_COLUMNS,
            ExperimentId::E2 => e2::GRID_COLUMNS,
            ExperimentId::E3 => e3::GRID_COLUMNS,
            ExperimentId::E4 => e4::GRID_COLUMNS,
            ExperimentId::E5 => e5::GRID_COLUMNS,
            ExperimentId::E6 => e6::GRID_COLUMNS,
            ExperimentId::E7 => e7::GRID_COLUMNS,
            ExperimentId::E8 => e8::GRID_COLUMNS,
            ExperimentId::E9 => e9::GRID_COLUMNS,
            ExperimentId::E10 => e10::GRID_COLUMNS,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ExperimentId::E1 => "self-consistent fixed point and its stability",
            ExperimentId::E2 => "KL cost, action variance and payoff across alpha",
            ExperimentId::E3 => "response to a defection block for five agents",
            ExperimentId::E4 => "metrics along the habituation trajectory",
            ExperimentId::E5 => "free-energy optimum across habituation depth",
            ExperimentId::E6 => "dynamic sentinel on a multi-phase opponent",
            ExperimentId::E7 => "sentinel parameter sensitivity",
            ExperimentId::E8 => "reservoir dimension sweep",
            ExperimentId::E9 => "sentinel advantage over dimension and block length",
            ExperimentId::E10 => "EMA smoothing baselines against the reservoir",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.number())
    }
}

impl FromStr for ExperimentId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix(['E', 'e']).unwrap_or(s);
        digits
            .parse::<usize>()
            .ok()
            .and_then(|k| k.checked_sub(1))
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

/// Successful `(job, output)` pairs in input order, plus the failed cells.
pub type JobResults<J, T> = (Vec<(J, T)>, Vec<CellFailure>);

/// Everything a run needs besides the experiment id.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: Config,
    /// Worker threads for the grid.
    pub jobs: usize,
}

/// Seed of the sub-runs derived from one body seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum SimRole {
    /// Habituated reference sample for KL estimation.
    Baseline = 1,
    /// Every measured condition. Conditions share it so they face the same
    /// opponent draws.
    Measure = 2,
}

pub fn sim_seed(body_seed: u64, role: SimRole) -> u64 {
    derive_seed(body_seed, &[0x53_49_4D, role as u64])
}

impl RunContext {
    pub fn new(config: Config) -> Self {
        Self { config, jobs: 1 }
    }

    pub fn seeds(&self) -> Vec<usize> {
        (0..self.config.seeds).collect()
    }

    /// `derive_seed(master, [experiment, cell, seed index])`.
    pub fn body_seed(&self, id: ExperimentId, cell: usize, seed_index: usize) -> u64 {
        derive_seed(self.config.master_seed, &[id.number(), cell as u64, seed_index as u64])
    }

    /// Runs `f` over `jobs` on a pool of `self.jobs` workers. Output order
    /// follows input order; failed jobs are reported and dropped.
    pub fn run_jobs<J, T, F>(&self, jobs: Vec<J>, f: F) -> Result<JobResults<J, T>>
    where
        J: Job + Send + Sync,
        T: Send,
        F: Fn(&J) -> brg_core::Result<T> + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| HarnessError::Invalid(format!("cannot start worker pool: {e}")))?;
        let results: Vec<brg_core::Result<T>> = pool.install(|| jobs.par_iter().map(&f).collect());
        let mut ok = Vec::with_capacity(jobs.len());
        let mut failures = Vec::new();
        for (job, r) in jobs.into_iter().zip(results) {
            match r {
                Ok(t) => ok.push((job, t)),
                Err(e) => failures.push(CellFailure { cell: job.cell_label(), seed: job.seed_index(), error: e.to_string() }),
            }
        }
        Ok((ok, failures))
    }
}

/// A unit of parallel work.
pub trait Job {
    fn cell_label(&self) -> String;
    fn seed_index(&self) -> usize;
}

/// A job over one seed of a single-cell experiment.
#[derive(Debug, Clone, Copy)]
pub struct SeedJob(pub usize);

impl Job for SeedJob {
    fn cell_label(&self) -> String {
        "all".into()
    }

    fn seed_index(&self) -> usize {
        self.0
    }
}

/// A job over one (dimension, seed) pair.
#[derive(Debug, Clone, Copy)]
pub struct DimJob {
    pub dim_index: usize,
    pub dim: usize,
    pub seed: usize,
}

impl Job for DimJob {
    fn cell_label(&self) -> String {
        format!("d={}", self.dim)
    }

    fn seed_index(&self) -> usize {
        self.seed
    }
}

/// Tables and derived quantities of one experiment, ready for writing.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub id: ExperimentId,
    pub grid: CsvTable,
    /// Grid columns that identify a cell (seed excluded).
    pub key_columns: Vec<&'static str>,
    /// Grid columns aggregated over seeds.
    pub metric_columns: Vec<&'static str>,
    /// Further tables, written as `E<k>_<name>.csv`.
    pub extra: Vec<(&'static str, CsvTable)>,
    pub derived: Map<String, Value>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutput {
    fn new(id: ExperimentId, grid: CsvTable, keys: &[&'static str], metrics: &[&'static str]) -> Self {
        Self {
            id,
            grid,
            key_columns: keys.to_vec(),
            metric_columns: metrics.to_vec(),
            extra: Vec::new(),
            derived: Map::new(),
            failures: Vec::new(),
        }
    }

    pub fn grid_file(&self) -> String {
        format!("{}_grid.csv", self.id)
    }

    pub fn summary_file(&self) -> String {
        format!("{}_summary.json", self.id)
    }

    pub fn summary(&self, ctx: &RunContext) -> Summary {
        let mut files = vec![self.grid_file()];
        files.extend(self.extra.iter().map(|(name, _)| format!("{}_{name}.csv", self.id)));
        Summary {
            experiment: self.id.to_string(),
            title: self.id.title().to_string(),
            provenance: Provenance {
                config_hash: ctx.config.hash(),
                master_seed: ctx.config.master_seed,
                seeds: ctx.seeds(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                schema_version: SCHEMA_VERSION,
            },
            key_columns: self.key_columns.iter().map(|s| s.to_string()).collect(),
            aggregates: self.grid.aggregate(&self.key_columns, &self.metric_columns),
            derived: self.derived.clone(),
            failures: self.failures.clone(),
            files,
            config: serde_json::to_value(&ctx.config).expect("config serialises"),
        }
    }

    /// Writes every table and the summary into `dir`; returns the paths.
    pub fn write(&self, ctx: &RunContext, dir: &Path) -> Result<Vec<PathBuf>> {
        prepare_out_dir(dir)?;
        let mut written = Vec::new();
        let grid_path = dir.join(self.grid_file());
        write_atomic(&grid_path, &self.grid.to_csv_bytes()?)?;
        written.push(grid_path);
        for (name, table) in &self.extra {
            let p = dir.join(format!("{}_{name}.csv", self.id));
            write_atomic(&p, &table.to_csv_bytes()?)?;
            written.push(p);
        }
        let mut json = serde_json::to_vec_pretty(&self.summary(ctx))?;
        json.push(b'\n');
        let p = dir.join(self.summary_file());
        write_atomic(&p, &json)?;
        written.push(p);
        Ok(written)
    }
}

pub fn run_experiment(id: ExperimentId, ctx: &RunContext) -> Result<ExperimentOutput> {
    ctx.config.validate()?;
    match id {
        ExperimentId::E1 => e1::run(ctx),
        ExperimentId::E2 => e2::run(ctx),
        ExperimentId::E3 => e3::run(ctx),
        ExperimentId::E4 => e4::run(ctx),
        ExperimentId::E5 => e5::run(ctx),
        ExperimentId::E6 => e6::run(ctx),
        ExperimentId::E7 => e7::run(ctx),
        ExperimentId::E8 => e8::run(ctx),
        ExperimentId::E9 => e9::run(ctx),
        ExperimentId::E10 => e10::run(ctx),
    }
}

/// A labelled agent for experiments that compare several.
#[derive(Debug, Clone)]
pub struct Contender {
    /// `static`, `sentinel` or `allc`.
    pub kind: &'static str,
    /// Fixed receptivity; `None` for the sentinel.
    pub alpha: Option<f64>,
    pub agent: AgentSpec,
}

impl Contender {
    pub fn fixed(alpha: f64) -> Self {
        Self { kind: "static", alpha: Some(alpha), agent: AgentSpec::static_alpha(alpha) }
    }

    pub fn sentinel(cfg: &Config) -> Self {
        Self { kind: "sentinel", alpha: None, agent: AgentSpec::sentinel(cfg.sentinel.clone()) }
    }

    pub fn all_cooperate() -> Self {
        Self {
            kind: "allc",
            alpha: Some(0.0),
            agent: AgentSpec::static_alpha(0.0).with_cognitive(brg_core::game::CognitiveKind::AllC),
        }
    }

    pub fn label(&self) -> String {
        match self.alpha {
            Some(a) if self.kind == "static" => format!("alpha={a}"),
            _ => self.kind.to_string(),
        }
    }
}

/// Post-burn-in statistics of one measured run.
#[derive(Debug, Clone)]
pub struct Measured {
    pub variance: f64,
    pub mean_payoff: f64,
    pub mean_alpha: f64,
    pub kl: Option<KnnKl>,
    pub states: StateSample,
}

pub fn noisy_schedule(cfg: &Config) -> brg_core::Result<OpponentSchedule> {
    let m = &cfg.measurement;
    OpponentSchedule::noisy(m.epsilon, m.burn_in + m.rounds)
}

pub fn measurement_options(cfg: &Config) -> SimOptions {
    SimOptions { burn_in: cfg.measurement.burn_in, max_states: cfg.measurement.max_states, ..Default::default() }
}

/// States of the body acting alone against a cooperative opponent.
pub fn baseline_sample(body: &Body, cfg: &Config, seed: u64) -> brg_core::Result<StateSample> {
    let m = &cfg.measurement;
    let schedule = OpponentSchedule::cooperate(m.burn_in + m.rounds)?;
    let trace =
        run_simulation(body, &AgentSpec::static_alpha(1.0), &schedule, &cfg.payoff, &measurement_options(cfg), seed)?;
    Ok(trace.states)
}

fn summarise(trace: SimulationTrace, baseline: Option<&StateSample>, k: usize) -> brg_core::Result<Measured> {
    let kl = baseline.map(|b| kl_knn(&trace.states, b, k)).transpose()?;
    Ok(Measured {
        variance: trace.action_variance(),
        mean_payoff: trace.mean_payoff(),
        mean_alpha: trace.mean_alpha(),
        kl,
        states: trace.states,
    })
}

/// Runs `agent` against the noisy cooperative opponent and, when a baseline
/// is given, estimates the KL cost of the visited states.
pub fn measure(
    body: &Body,
    agent: &AgentSpec,
    baseline: Option<&StateSample>,
    cfg: &Config,
    seed: u64,
) -> brg_core::Result<Measured> {
    let trace = run_simulation(body, agent, &noisy_schedule(cfg)?, &cfg.payoff, &measurement_options(cfg), seed)?;
    summarise(trace, baseline, cfg.measurement.knn_k)
}

/// Smallest and largest spectral radius seen over habituation epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoExtent {
    pub min: f64,
    pub max: f64,
}

impl Default for RhoExtent {
    fn default() -> Self {
        Self { min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl RhoExtent {
    pub fn of(trace: &[f64]) -> Self {
        let mut e = Self::default();
        e.absorb(trace);
        e
    }

    pub fn absorb(&mut self, trace: &[f64]) {
        for &r in trace {
            self.min = self.min.min(r);
            self.max = self.max.max(r);
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self { min: self.min.min(other.min), max: self.max.max(other.max) }
    }

    fn record(self, derived: &mut Map<String, Value>) {
        if self.min <= self.max {
            derived.insert("habituation_rho_min".into(), self.min.into());
            derived.insert("habituation_rho_max".into(), self.max.into());
        }
    }
}

/// Index of `value` in `grid`, compared exactly.
pub(crate) fn position(grid: &[f64], value: f64) -> Option<usize> {
    grid.iter().position(|g| *g == value)
}

/// Geometric mean of per-seed ratios `num / den`, skipping non-positive pairs.
pub(crate) fn ratio_geomean(num: &[f64], den: &[f64]) -> (Vec<f64>, f64) {
    let ratios: Vec<f64> = num.iter().zip(den).filter(|(_, d)| **d > 0.0).map(|(n, d)| n / d).collect();
    let g = geometric_mean(&ratios);
    (ratios, g)
}

/// Mean of per-seed columns: `cols[seed][i]` averaged over seeds.
pub(crate) fn column_means(cols: &[Vec<f64>]) -> Vec<f64> {
    let width = cols.first().map_or(0, Vec::len);
    (0..width).map(|i| mean(&cols.iter().map(|c| c[i]).collect::<Vec<_>>())).collect()
}

/// First round from which `pred` holds for `sustain` consecutive rounds.
pub(crate) fn first_sustained(xs: &[f64], sustain: usize, pred: impl Fn(f64) -> bool) -> Option<usize> {
    let mut run = 0;
    for (i, x) in xs.iter().enumerate() {
        if pred(*x) {
            run += 1;
            if run == sustain.max(1) {
                return Some(i + 1 - run);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Index of the smallest value; ties resolve to the earliest.
pub(crate) fn argmin(xs: &[f64]) -> Option<usize> {
    xs.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &x)| match best {
            Some((_, b)) if b <= x => best,
            _ => Some((i, x)),
        })
        .map(|(i, _)| i)
}

pub(crate) fn json_opt(x: Option<f64>) -> Value {
    x.filter(|v| v.is_finite()).map_or(Value::Null, Value::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse_and_display() {
        assert_eq!("E2".parse::<ExperimentId>().unwrap(), ExperimentId::E2);
        assert_eq!("e10".parse::<ExperimentId>().unwrap(), ExperimentId::E10);
        assert_eq!("7".parse::<ExperimentId>().unwrap(), ExperimentId::E7);
        assert!("E11".parse::<ExperimentId>().is_err());
        assert!("E0".parse::<ExperimentId>().is_err());
        assert!("X".parse::<ExperimentId>().is_err());
        assert_eq!(ExperimentId::E10.to_string(), "E10");
    }

    #[test]
    fn sustained_run() {
        let xs = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(first_sustained(&xs, 3, |x| x > 0.5), Some(4));
        assert_eq!(first_sustained(&xs, 2, |x| x > 0.5), Some(1));
        assert_eq!(first_sustained(&xs, 4, |x| x > 0.5), None);
    }

    #[test]
    fn seeds_differ_by_role_and_path() {
        let ctx = RunContext::new(Config::default());
        let a = ctx.body_seed(ExperimentId::E2, 0, 0);
        assert_ne!(a, ctx.body_seed(ExperimentId::E2, 0, 1));
        assert_ne!(a, ctx.body_seed(ExperimentId::E3, 0, 0));
        assert_ne!(a, ctx.body_seed(ExperimentId::E2, 1, 0));
        assert_ne!(sim_seed(a, SimRole::Baseline), sim_seed(a, SimRole::Measure));
    }

    #[test]
    fn ratio_geomean_skips_zero_denominators() {
        let (r, g) = ratio_geomean(&[4.0, 9.0, 1.0], &[1.0, 1.0, 0.0]);
        assert_eq!(r, vec![4.0, 9.0]);
        assert!((g - 6.0).abs() < 1e-12);
    }
}
