//! Declarative experiment configuration.
//!
//! A config file is TOML. Every key is optional: the file is deep-merged over
//! [`Config::default`], so a file only needs the values it changes. See
//! `configs/default.toml` for an annotated copy of every default.

use std::path::Path;

use brg_core::body::BodySpec;
use brg_core::game::{OpponentSchedule, PayoffMatrix, PhaseKind};
use brg_core::governance::SentinelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const DEFAULT_MASTER_SEED: u64 = 20_250_601;

fn unit_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

fn schedule(text: &str) -> OpponentSchedule {
    text.parse().expect("built-in schedule parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub master_seed: u64,
    /// Number of seeds per grid cell.
    pub seeds: usize,
    pub body: BodySpec,
    pub payoff: PayoffMatrix,
    pub sentinel: SentinelConfig,
    pub measurement: Measurement,
    pub e1: E1Config,
    pub e2: E2Config,
    pub e3: E3Config,
    pub e4: E4Config,
    pub e5: E5Config,
    pub e6: E6Config,
    pub e7: E7Config,
    pub e8: E8Config,
    pub e9: E9Config,
    pub e10: E10Config,
}

/// Settings shared by every noisy-opponent measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement {
    /// Defection probability of the noisy cooperative opponent.
    pub epsilon: f64,
    pub burn_in: usize,
    /// Measured rounds after burn-in.
    pub rounds: usize,
    pub knn_k: usize,
    /// Cap on stored states per run for KL estimation.
    pub max_states: usize,
    /// Alpha at or below which the sentinel counts as having detected a threat.
    pub detection_threshold: f64,
    /// Rounds before onset averaged into the recovery reference.
    pub reference_window: usize,
    pub recovery_fraction: f64,
    /// Consecutive rounds the action must stay above threshold to count as recovered.
    pub recovery_sustain: usize,
}

impl Default for Measurement {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            burn_in: 500,
            rounds: 2000,
            knn_k: 5,
            max_states: 2000,
            detection_threshold: 0.06,
            reference_window: 50,
            recovery_fraction: 0.95,
            recovery_sustain: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E1Config {
    pub rounds: usize,
    /// Body output must stay within this distance of the fixed-point action.
    pub tolerance: f64,
    pub sustain: usize,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iters: usize,
}

impl Default for E1Config {
    fn default() -> Self {
        Self { rounds: 200, tolerance: 0.02, sustain: 5, fixed_point_tol: 1e-10, fixed_point_max_iters: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2Config {
    pub alphas: Vec<f64>,
}

impl Default for E2Config {
    fn default() -> Self {
        Self { alphas: unit_grid(10) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E3Config {
    pub schedule: OpponentSchedule,
    pub static_alphas: Vec<f64>,
    pub include_sentinel: bool,
    pub include_allc: bool,
}

impl Default for E3Config {
    fn default() -> Self {
        Self {
            schedule: schedule("coop:200,defect:100,coop:200"),
            static_alphas: vec![0.0, 0.5, 1.0],
            include_sentinel: true,
            include_allc: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E4Config {
    pub max_epochs: usize,
    pub interval: usize,
    pub static_alphas: Vec<f64>,
    pub include_sentinel: bool,
}

impl Default for E4Config {
    fn default() -> Self {
        Self { max_epochs: 300, interval: 15, static_alphas: vec![0.0, 0.5, 1.0], include_sentinel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E5Config {
    pub habituation: Vec<usize>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for E5Config {
    fn default() -> Self {
        Self { habituation: vec![0, 10, 25, 50, 100, 200], alphas: unit_grid(10), lambdas: vec![1.0, 3.0, 8.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E6Config {
    pub schedule: OpponentSchedule,
    pub static_alphas: Vec<f64>,
}

impl Default for E6Config {
    fn default() -> Self {
        Self {
            schedule: schedule("coop:500,defect:50,coop:500,noisy(0.3):200,coop:500"),
            static_alphas: vec![0.0, 0.7, 0.85, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E7Config {
    pub alpha0: Vec<f64>,
    pub eta_up: Vec<f64>,
    pub eta_down: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Default for E7Config {
    fn default() -> Self {
        Self {
            alpha0: vec![0.6, 0.7, 0.8, 0.85, 0.9, 0.95],
            eta_up: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            eta_down: vec![0.1, 0.3, 0.5, 0.8, 1.0],
            theta: vec![0.0, 0.05, 0.1, 0.2, 0.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E8Config {
    pub dims: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Metabolic cost used for the free-energy optimum.
    pub lambda: f64,
    /// Ridge penalty at the reference dimension; scaled linearly with d.
    pub ridge_base: f64,
    pub ridge_reference_dim: usize,
}

impl Default for E8Config {
    fn default() -> Self {
        Self {
            dims: vec![5, 10, 15, 20, 30, 50, 75, 100],
            alphas: unit_grid(10),
            lambda: 3.0,
            ridge_base: 1e-3,
            ridge_reference_dim: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E9Config {
    pub dims: Vec<usize>,
    pub block_lengths: Vec<usize>,
    /// Cooperative rounds before the defection block.
    pub lead: usize,
    /// Cooperative rounds after it.
    pub tail: usize,
}

impl Default for E9Config {
    fn default() -> Self {
        Self { dims: vec![5, 10, 20, 30, 50, 75], block_lengths: vec![10, 50, 100, 200, 500], lead: 500, tail: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E10Config {
    pub gammas: Vec<f64>,
    pub perturbation: OpponentSchedule,
}

impl Default for E10Config {
    fn default() -> Self {
        Self { gammas: vec![0.0, 0.5, 0.9, 0.95, 0.99], perturbation: schedule("coop:200,defect:100,coop:200") }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            master_seed: DEFAULT_MASTER_SEED,
            seeds: 20,
            body: BodySpec::default(),
            payoff: PayoffMatrix::default(),
            sentinel: SentinelConfig::default(),
            measurement: Measurement::default(),
            e1: E1Config::default(),
            e2: E2Config::default(),
            e3: E3Config::default(),
            e4: E4Config::default(),
            e5: E5Config::default(),
            e6: E6Config::default(),
            e7: E7Config::default(),
            e8: E8Config::default(),
            e9: E9Config::default(),
            e10: E10Config::default(),
        }
    }
}

/// Recursively overlays `over` onto `base`. Tables merge key by key; any
/// other value replaces the base value.
pub fn deep_merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// First and one-past-last round of the first defection phase.
pub fn defection_block(s: &OpponentSchedule) -> Option<(usize, usize)> {
    let idx = s.phases().iter().position(|p| p.kind == PhaseKind::Defect)?;
    let start = s.phase_start(idx)?;
    Some((start, start + s.phases()[idx].length))
}

fn invalid(section: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Invalid(format!("{section}: {msg}"))
}

fn check_alphas(section: &str, name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(invalid(section, format!("{name} must be nonempty")));
    }
    if let Some(a) = xs.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(invalid(section, format!("{name} values must lie in [0, 1], got {a}")));
    }
    Ok(())
}

fn check_nonempty<T>(section: &str, name: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        Err(invalid(section, format!("{name} must be nonempty")))
    } else {
        Ok(())
    }
}

impl Config {
    /// Parses TOML text merged over the defaults, then validates.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |message: String| HarnessError::ConfigParse { path: origin.to_path_buf(), message };
        let over: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let mut base = toml::Value::try_from(Config::default()).map_err(|e| parse_err(e.to_string()))?;
        deep_merge(&mut base, over);
        let cfg: Config = base.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::ConfigRead { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        self.body.validate().map_err(|e| invalid("body", e))?;
        self.payoff.validate().map_err(|e| invalid("payoff", e))?;
        self.sentinel.validate().map_err(|e| invalid("sentinel", e))?;

        let m = &self.measurement;
        if !(m.epsilon > 0.0 && m.epsilon < 1.0) {
            return Err(invalid("measurement", format!("epsilon must lie in (0, 1), got {}", m.epsilon)));
        }
        if m.rounds < 2 {
            return Err(invalid("measurement", "rounds must be at least 2"));
        }
        if m.knn_k == 0 || m.max_states <= m.knn_k {
            return Err(invalid("measurement", "knn_k must be >= 1 and max_states > knn_k"));
        }
        if !(m.recovery_fraction > 0.0 && m.recovery_fraction <= 1.0) {
            return Err(invalid("measurement", "recovery_fraction must lie in (0, 1]"));
        }
        if m.recovery_sustain == 0 || m.reference_window == 0 {
            return Err(invalid("measurement", "recovery_sustain and reference_window must be positive"));
        }

        if self.e1.rounds == 0 || !(self.e1.tolerance > 0.0) || !(self.e1.fixed_point_tol > 0.0) {
            return Err(invalid("e1", "rounds, tolerance and fixed_point_tol must be positive"));
        }
        check_alphas("e2", "alphas", &self.e2.alphas)?;

        check_alphas("e3", "static_alphas", &self.e3.static_alphas)?;
        if defection_block(&self.e3.schedule).is_none() {
            return Err(invalid("e3", "schedule must contain a defect phase"));
        }

        if self.e4.interval == 0 {
            return Err(invalid("e4", "interval must be positive"));
        }
        check_alphas("e4", "static_alphas", &self.e4.static_alphas)?;

        check_nonempty("e5", "habituation", &self.e5.habituation)?;
        check_alphas("e5", "alphas", &self.e5.alphas)?;
        check_nonempty("e5", "lambdas", &self.e5.lambdas)?;
        if self.e5.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("e5", "lambdas must be positive"));
        }

        check_alphas("e6", "static_alphas", &self.e6.static_alphas)?;
        if defection_block(&self.e6.schedule).is_none() {
            return Err(invalid("e6", "schedule must contain a defect phase"));
        }

        for (name, xs) in [
            ("alpha0", &self.e7.alpha0),
            ("eta_up", &self.e7.eta_up),
            ("eta_down", &self.e7.eta_down),
            ("theta", &self.e7.theta),
        ] {
            check_nonempty("e7", name, xs)?;
        }
        for (name, value) in self.e7_variants() {
            self.sentinel_with(&name, value).validate().map_err(|e| invalid("e7", format!("{name}={value}: {e}")))?;
        }

        check_nonempty("e8", "dims", &self.e8.dims)?;
        check_alphas("e8", "alphas", &self.e8.alphas)?;
        if self.e8.dims.contains(&0) || !(self.e8.lambda > 0.0) || !(self.e8.ridge_base > 0.0) {
            return Err(invalid("e8", "dims, lambda and ridge_base must be positive"));
        }
        if self.e8.ridge_reference_dim == 0 {
            return Err(invalid("e8", "ridge_reference_dim must be positive"));
        }

        check_nonempty("e9", "dims", &self.e9.dims)?;
        check_nonempty("e9", "block_lengths", &self.e9.block_lengths)?;
        if self.e9.dims.contains(&0) || self.e9.block_lengths.contains(&0) || self.e9.lead == 0 {
            return Err(invalid("e9", "dims, block_lengths and lead must be positive"));
        }

        check_nonempty("e10", "gammas", &self.e10.gammas)?;
        if let Some(g) = self.e10.gammas.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(invalid("e10", format!("gammas must lie in [0, 1), got {g}")));
        }
        if defection_block(&self.e10.perturbation).is_none() {
            return Err(invalid("e10", "perturbation schedule must contain a defect phase"));
        }
        Ok(())
    }

    /// One-at-a-time sentinel variants swept by E7, as (parameter, value).
    pub fn e7_variants(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, xs) in [
            ("alpha0", &self.e7.alpha0),
            ("eta_up", &self.e7.eta_up),
            ("eta_down", &self.e7.eta_down),
            ("theta", &self.e7.theta),
        ] {
            out.extend(xs.iter().map(|v| (name.to_string(), *v)));
        }
        out
    }

    pub fn sentinel_with(&self, parameter: &str, value: f64) -> SentinelConfig {
        let mut s = self.sentinel.clone();
        match parameter {
            "alpha0" => s.alpha0 = value,
            "eta_up" => s.eta_up = value,
            "eta_down" => s.eta_down = value,
            "theta" => s.theta = value,
            other => unreachable!("unknown sentinel parameter {other}"),
        }
        s
    }

    /// Body spec with the given dimension and ridge penalty scaled linearly
    /// from the reference dimension.
    pub fn body_for_dim(&self, dim: usize) -> BodySpec {
        let mut b = self.body.clone();
        b.reservoir.dim = dim;
        b.training.ridge_lambda = self.e8.ridge_base * dim as f64 / self.e8.ridge_reference_dim as f64;
        b
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON encoding of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
