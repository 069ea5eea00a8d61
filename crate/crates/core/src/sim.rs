//! The closed-loop game between a body-governed agent and an opponent
//! program.

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis::kl::StateSample;
use crate::analysis::metrics::action_variance;
use crate::body::Body;
use crate::error::{BrgError, Result};
use crate::game::{CognitiveKind, CognitiveStrategy, OpponentSchedule, PayoffMatrix, INITIAL_OPPONENT_ACTION};
use crate::governance::{
    discomfort, mix, update_alpha, update_baselines, Discomfort, GovernanceMode, SentinelConfig,
    SentinelState,
};
use crate::rng::{gaussian_vector, stream, Stream};

pub const DEFAULT_MAX_STATES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub governance: GovernanceMode,
    pub cognitive: CognitiveKind,
}

impl AgentSpec {
    pub fn static_alpha(alpha: f64) -> Self {
        Self { governance: GovernanceMode::StaticAlpha { alpha }, cognitive: CognitiveKind::Tft }
    }

    pub fn sentinel(config: SentinelConfig) -> Self {
        Self { governance: GovernanceMode::DynamicSentinel { config }, cognitive: CognitiveKind::Tft }
    }

    pub fn with_cognitive(mut self, cognitive: CognitiveKind) -> Self {
        self.cognitive = cognitive;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.governance.validate()?;
        self.cognitive.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Leading rounds excluded from measured statistics and state samples.
    pub burn_in: usize,
    /// Cap on stored post-burn-in states; beyond it states are
    /// reservoir-sampled uniformly.
    pub max_states: usize,
    /// Intrinsic reservoir noise on or off.
    pub noise: bool,
    /// Overrides the body's post-habituation state as the starting point.
    pub initial_state: Option<DVector<f64>>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { burn_in: 0, max_states: DEFAULT_MAX_STATES, noise: true, initial_state: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub a_self: f64,
    pub a_opp: f64,
    pub a_body: f64,
    pub a_cog: f64,
    pub alpha: f64,
    pub discomfort: Discomfort,
    pub payoff: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub records: Vec<RoundRecord>,
    /// Post-burn-in reservoir states `x(t+1)`.
    pub states: StateSample,
    pub final_state: DVector<f64>,
    pub burn_in: usize,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn measured(&self) -> &[RoundRecord] {
        &self.records[self.burn_in.min(self.records.len())..]
    }

    pub fn actions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a_self).collect()
    }

    pub fn body_actions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a_body).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }

    pub fn mean_payoff(&self) -> f64 {
        let m = self.measured();
        m.iter().map(|r| r.payoff).sum::<f64>() / m.len() as f64
    }

    pub fn cumulative_payoff(&self) -> f64 {
        self.measured().iter().map(|r| r.payoff).sum()
    }

    pub fn action_variance(&self) -> f64 {
        let a: Vec<f64> = self.measured().iter().map(|r| r.a_self).collect();
        action_variance(&a)
    }

    pub fn mean_alpha(&self) -> f64 {
        let m = self.measured();
        m.iter().map(|r| r.alpha).sum::<f64>() / m.len() as f64
    }
}

/// Plays `schedule.len()` rounds. Within a round: observe the opponent's last
/// action, form the cognitive and body proposals, measure discomfort against
/// the current baselines, update alpha, act with the new alpha, let the
/// opponent act and advance the reservoir, then update the baselines.
///
/// Random streams (opponent, noise, state sampling) derive from `seed`.
pub fn run_simulation(
    body: &Body,
    agent: &AgentSpec,
    schedule: &OpponentSchedule,
    payoff: &PayoffMatrix,
    opts: &SimOptions,
    seed: u64,
) -> Result<SimulationTrace> {
    agent.validate()?;
    let d = body.dim();
    let rounds = schedule.len();
    if opts.burn_in >= rounds {
        return Err(BrgError::InvalidParameter(format!(
            "burn_in ({}) must be shorter than the schedule ({rounds})",
            opts.burn_in
        )));
    }
    let mut x = opts.initial_state.clone().unwrap_or_else(|| body.state.clone());
    if x.len() != d {
        return Err(BrgError::DimensionMismatch { expected: d, actual: x.len() });
    }

    let (sentinel_cfg, adaptive) = match &agent.governance {
        GovernanceMode::DynamicSentinel { config } => (config.clone(), true),
        GovernanceMode::StaticAlpha { .. } => (SentinelConfig::default(), false),
    };
    let mut sentinel =
        SentinelState::new(agent.governance.initial_alpha(), body.baseline_state.clone(), body.baseline_action);
    let mut cognitive = CognitiveStrategy::new(agent.cognitive)?;

    let mut opp_rng = stream(seed, Stream::Opponent);
    let mut noise_rng = stream(seed, Stream::Noise);
    let mut sample_rng = stream(seed, Stream::Sampling);
    let noise_std = if opts.noise { body.params.noise_std() } else { 0.0 };

    let mut records = Vec::with_capacity(rounds);
    let mut states = StateSample::with_capacity(d, opts.max_states.min(rounds - opts.burn_in));
    let mut seen = 0usize;
    let mut opp_prev = INITIAL_OPPONENT_ACTION;

    for t in 0..rounds {
        let a_cog = cognitive.action(opp_prev);
        let a_body = body.readout.readout(&x);
        let dis = discomfort(&x, &sentinel.x_bar, a_body, sentinel.a_bar, a_cog, &sentinel_cfg);
        sentinel.last_discomfort = dis;
        if adaptive {
            sentinel.alpha = update_alpha(sentinel.alpha, dis.total, &sentinel_cfg);
        }
        let a_self = mix(sentinel.alpha, a_body, a_cog);

        let a_opp = schedule.action(t, &mut opp_rng)?;
        let noise = gaussian_vector(&mut noise_rng, d, noise_std);
        let next = body.params.step(&x, a_self, a_opp, &noise);
        update_baselines(&mut sentinel, &x, a_body, sentinel_cfg.gamma_ema);

        records.push(RoundRecord {
            t,
            a_self,
            a_opp,
            a_body,
            a_cog,
            alpha: sentinel.alpha,
            discomfort: dis,
            payoff: payoff.payoff(a_self, a_opp),
        });

        if t >= opts.burn_in && opts.max_states > 0 {
            if seen < opts.max_states {
                states.push(&next)?;
            } else {
                let j = sample_rng.random_range(0..=seen);
                if j < opts.max_states {
                    states.replace(j, &next);
                }
            }
            seen += 1;
        }
        x = next;
        opp_prev = a_opp;
    }

    Ok(SimulationTrace { records, states, final_state: x, burn_in: opts.burn_in })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{develop_body, BodySpec};
    use crate::reservoir::{HabituationConfig, ReadoutTraining, ReservoirSpec};

    fn body() -> Body {
        let spec = BodySpec {
            reservoir: ReservoirSpec { dim: 10, ..Default::default() },
            training: ReadoutTraining { n_per_class: 200, burn_in: 50, ..Default::default() },
            habituation: HabituationConfig { epochs: 20, ..Default::default() },
            baseline_window: 100,
        };
        develop_body(&spec, 3).unwrap()
    }

    #[test]
    fn tft_passthrough_at_alpha_zero() {
        let b = body();
        let s: OpponentSchedule = "coop:20,noisy(0.4):100".parse().unwrap();
        let tr = run_simulation(&b, &AgentSpec::static_alpha(0.0), &s, &PayoffMatrix::default(), &SimOptions::default(), 1)
            .unwrap();
        assert_eq!(tr.records[0].a_self, 1.0);
        for w in tr.records.windows(2) {
            assert_eq!(w[1].a_self, w[0].a_opp);
        }
    }

    #[test]
    fn body_passthrough_at_alpha_one() {
        let b = body();
        let s = OpponentSchedule::noisy(0.2, 50).unwrap();
        let tr = run_simulation(&b, &AgentSpec::static_alpha(1.0), &s, &PayoffMatrix::default(), &SimOptions::default(), 1)
            .unwrap();
        assert!(tr.records.iter().all(|r| r.a_self == r.a_body && r.alpha == 1.0));
    }

    #[test]
    fn payoff_recorded_per_round() {
        let b = body();
        let m = PayoffMatrix::default();
        let s = OpponentSchedule::noisy(0.3, 60).unwrap();
        let tr = run_simulation(&b, &AgentSpec::static_alpha(0.4), &s, &m, &SimOptions::default(), 8).unwrap();
        assert_eq!(tr.len(), 60);
        for r in &tr.records {
            assert_eq!(r.payoff, m.payoff(r.a_self, r.a_opp));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let b = body();
        let s = OpponentSchedule::noisy(0.1, 80).unwrap();
        let agent = AgentSpec::sentinel(SentinelConfig::default());
        let opts = SimOptions { burn_in: 10, ..Default::default() };
        let a = run_simulation(&b, &agent, &s, &PayoffMatrix::default(), &opts, 4).unwrap();
        let c = run_simulation(&b, &agent, &s, &PayoffMatrix::default(), &opts, 4).unwrap();
        assert_eq!(a.records, c.records);
        assert_eq!(a.states, c.states);
        assert_eq!(a.states.len(), 70);
    }

    #[test]
    fn opponent_stream_shared_across_agents() {
        let b = body();
        let s = OpponentSchedule::noisy(0.5, 40).unwrap();
        let m = PayoffMatrix::default();
        let o = SimOptions::default();
        let x = run_simulation(&b, &AgentSpec::static_alpha(0.0), &s, &m, &o, 6).unwrap();
        let y = run_simulation(&b, &AgentSpec::static_alpha(1.0), &s, &m, &o, 6).unwrap();
        let ox: Vec<f64> = x.records.iter().map(|r| r.a_opp).collect();
        let oy: Vec<f64> = y.records.iter().map(|r| r.a_opp).collect();
        assert_eq!(ox, oy);
    }

    #[test]
    fn state_sample_is_capped() {
        let b = body();
        let s = OpponentSchedule::cooperate(300).unwrap();
        let opts = SimOptions { burn_in: 50, max_states: 100, ..Default::default() };
        let tr = run_simulation(&b, &AgentSpec::static_alpha(1.0), &s, &PayoffMatrix::default(), &opts, 2).unwrap();
        assert_eq!(tr.states.len(), 100);
    }

    #[test]
    fn sentinel_alpha_stays_clipped() {
        let b = body();
        let s: OpponentSchedule = "coop:50,defect:50,noisy(0.3):50".parse().unwrap();
        let cfg = SentinelConfig::default();
        let tr = run_simulation(&b, &AgentSpec::sentinel(cfg.clone()), &s, &PayoffMatrix::default(), &SimOptions::default(), 2)
            .unwrap();
        assert!(tr.records.iter().all(|r| r.alpha >= cfg.alpha_min && r.alpha <= 1.0));
    }

    #[test]
    fn rejects_burn_in_past_end() {
        let b = body();
        let s = OpponentSchedule::cooperate(10).unwrap();
        let opts = SimOptions { burn_in: 10, ..Default::default() };
        assert!(run_simulation(&b, &AgentSpec::static_alpha(1.0), &s, &PayoffMatrix::default(), &opts, 0).is_err());
    }
}
