//! Metacognitive mixing and the dynamic sentinel.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BrgError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentinelConfig {
    pub alpha0: f64,
    pub alpha_min: f64,
    pub eta_up: f64,
    pub eta_down: f64,
    pub theta: f64,
    pub w_x: f64,
    pub w_a: f64,
    pub w_e: f64,
    pub gamma_ema: f64,
}

impl Default for SentinelConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.85,
            alpha_min: 0.05,
            eta_up: 0.05,
            eta_down: 0.5,
            theta: 0.1,
            w_x: 0.3,
            w_a: 0.3,
            w_e: 0.4,
            gamma_ema: 0.02,
        }
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl SentinelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BrgError::InvalidParameter(msg));
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad(format!("sentinel alpha0 must lie in (0, 1], got {}", self.alpha0));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 1.0) {
            return bad(format!("sentinel alpha_min must lie in (0, 1), got {}", self.alpha_min));
        }
        if !(self.alpha_min < self.alpha0) {
            return bad(format!(
                "sentinel requires alpha_min < alpha0, got {} >= {}",
                self.alpha_min, self.alpha0
            ));
        }
        if !(self.eta_up > 0.0) || !(self.eta_down > 0.0) {
            return bad("sentinel eta_up and eta_down must be positive".into());
        }
        if !(self.theta >= 0.0) {
            return bad(format!("sentinel theta must be nonnegative, got {}", self.theta));
        }
        if [self.w_x, self.w_a, self.w_e].iter().any(|w| !(*w >= 0.0)) {
            return bad("discomfort weights must be nonnegative".into());
        }
        let sum = self.w_x + self.w_a + self.w_e;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return bad(format!("discomfort weights must satisfy w_x + w_a + w_e = 1, got {sum}"));
        }
        if !(self.gamma_ema > 0.0 && self.gamma_ema < 1.0) {
            return bad(format!("gamma_ema must lie in (0, 1), got {}", self.gamma_ema));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GovernanceMode {
    StaticAlpha { alpha: f64 },
    DynamicSentinel { config: SentinelConfig },
}

impl GovernanceMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            GovernanceMode::StaticAlpha { alpha } => {
                if (0.0..=1.0).contains(alpha) {
                    Ok(())
                } else {
                    Err(BrgError::InvalidParameter(format!("static alpha must lie in [0, 1], got {alpha}")))
                }
            }
            GovernanceMode::DynamicSentinel { config } => config.validate(),
        }
    }

    /// Receptivity used on the first round.
    pub fn initial_alpha(&self) -> f64 {
        match self {
            GovernanceMode::StaticAlpha { alpha } => *alpha,
            GovernanceMode::DynamicSentinel { config } => config.alpha0,
        }
    }
}

/// Discomfort and its three components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Discomfort {
    pub total: f64,
    pub state: f64,
    pub output: f64,
    pub disagree: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentinelState {
    pub alpha: f64,
    pub x_bar: DVector<f64>,
    pub a_bar: f64,
    pub last_discomfort: Discomfort,
}

impl SentinelState {
    pub fn new(alpha: f64, x_bar: DVector<f64>, a_bar: f64) -> Self {
        Self { alpha, x_bar, a_bar, last_discomfort: Discomfort::default() }
    }

    /// Returns the state with `alpha` advanced by one receptivity update.
    pub fn with_update(mut self, d: f64, cfg: &SentinelConfig) -> Self {
        self.alpha = update_alpha(self.alpha, d, cfg);
        self
    }
}

pub fn mix(alpha: f64, a_body: f64, a_cog: f64) -> f64 {
    alpha * a_body + (1.0 - alpha) * a_cog
}

pub fn discomfort(
    x: &DVector<f64>,
    x_bar: &DVector<f64>,
    a_body: f64,
    a_bar: f64,
    a_cog: f64,
    cfg: &SentinelConfig,
) -> Discomfort {
    let state = (x - x_bar).norm() / (x.len() as f64).sqrt();
    let output = (a_body - a_bar).abs();
    let disagree = (a_body - a_cog).abs();
    Discomfort {
        total: cfg.w_x * state + cfg.w_a * output + cfg.w_e * disagree,
        state,
        output,
        disagree,
    }
}

/// Clipped asymmetric leaky integrator.
pub fn update_alpha(alpha: f64, d: f64, cfg: &SentinelConfig) -> f64 {
    let raw = alpha + cfg.eta_up * (cfg.alpha0 - alpha) - cfg.eta_down * (d - cfg.theta).max(0.0);
    raw.clamp(cfg.alpha_min, 1.0)
}

/// Fixed point of [`update_alpha`] under constant discomfort.
pub fn sentinel_equilibrium(d: f64, cfg: &SentinelConfig) -> f64 {
    if d <= cfg.theta {
        cfg.alpha0
    } else {
        (cfg.alpha0 - cfg.eta_down / cfg.eta_up * (d - cfg.theta)).max(cfg.alpha_min)
    }
}

pub fn update_baselines(state: &mut SentinelState, x: &DVector<f64>, a_body: f64, gamma_ema: f64) {
    state.x_bar *= 1.0 - gamma_ema;
    state.x_bar.axpy(gamma_ema, x, 1.0);
    state.a_bar = (1.0 - gamma_ema) * state.a_bar + gamma_ema * a_body;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mix_endpoints() {
        assert_eq!(mix(0.0, 0.98, 0.3), 0.3);
        assert_eq!(mix(1.0, 0.98, 0.3), 0.98);
        assert_relative_eq!(mix(0.5, 0.98, 0.0), 0.49, epsilon = 1e-15);
    }

    #[test]
    fn discomfort_examples() {
        let cfg = SentinelConfig::default();
        let x = DVector::from_element(3, 0.2);
        assert_eq!(discomfort(&x, &x, 0.7, 0.7, 0.7, &cfg).total, 0.0);

        let d = discomfort(&x, &x, 0.98, 0.98, 0.0, &cfg);
        assert_relative_eq!(d.total, 0.392, epsilon = 1e-12);

        let x4 = DVector::from_element(4, 1.0);
        let d = discomfort(&x4, &DVector::zeros(4), 0.5, 0.5, 0.5, &cfg);
        assert_relative_eq!(d.state, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.total, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn alpha_update_examples() {
        let cfg = SentinelConfig::default();
        assert_eq!(update_alpha(0.85, 0.0, &cfg), 0.85);
        assert_relative_eq!(update_alpha(0.85, 0.5, &cfg), 0.65, epsilon = 1e-12);
        assert_eq!(update_alpha(0.10, 1.0, &cfg), 0.05);
    }

    #[test]
    fn equilibrium_branches() {
        let cfg = SentinelConfig::default();
        assert_eq!(sentinel_equilibrium(0.05, &cfg), 0.85);
        assert_relative_eq!(sentinel_equilibrium(0.15, &cfg), 0.35, epsilon = 1e-12);
        assert_eq!(sentinel_equilibrium(0.5, &cfg), 0.05);
    }

    #[test]
    fn baselines() {
        let mut s = SentinelState::new(0.85, DVector::zeros(1), 0.0);
        update_baselines(&mut s, &DVector::from_element(1, 1.0), 1.0, 0.02);
        assert_relative_eq!(s.x_bar[0], 0.02, epsilon = 1e-15);
        assert_relative_eq!(s.a_bar, 0.02, epsilon = 1e-15);

        let mut s = SentinelState::new(0.85, DVector::from_element(2, 0.3), 0.1);
        let x = DVector::from_vec(vec![0.9, -0.4]);
        update_baselines(&mut s, &x, 0.6, 1.0);
        assert_eq!(s.x_bar, x);
        assert_eq!(s.a_bar, 0.6);
    }

    #[test]
    fn config_validation_names_invariant() {
        let cfg = SentinelConfig { w_e: 0.5, ..Default::default() };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("w_x + w_a + w_e = 1"), "{msg}");
        let cfg = SentinelConfig { alpha_min: 0.9, ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("alpha_min < alpha0"));
        assert!(SentinelConfig::default().validate().is_ok());
    }

    #[test]
    fn mode_validation() {
        assert!(GovernanceMode::StaticAlpha { alpha: 1.2 }.validate().is_err());
        assert_eq!(GovernanceMode::StaticAlpha { alpha: 0.3 }.initial_alpha(), 0.3);
        let m = GovernanceMode::DynamicSentinel { config: SentinelConfig::default() };
        assert_eq!(m.initial_alpha(), 0.85);
    }
}
