//! Oja-rule habituation of the recurrent weights against a cooperative
//! opponent, with a homeostatic spectral-radius clamp after every update.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{spectral_radius, ReadoutWeights, ReservoirParams, ReservoirState};
use crate::error::{BrgError, Result};
use crate::rng::{gaussian_vector, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HabituationConfig {
    /// Oja learning rate.
    pub beta: f64,
    /// Number of habituation rounds; one Oja update per round.
    pub epochs: usize,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl Default for HabituationConfig {
    fn default() -> Self {
        Self { beta: 0.01, epochs: 300, rho_min: 0.05, rho_max: 0.99 }
    }
}

impl HabituationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(BrgError::InvalidParameter("habituation beta must be positive".into()));
        }
        if !(self.rho_min > 0.0 && self.rho_min < self.rho_max && self.rho_max < 1.0) {
            return Err(BrgError::InvalidParameter(format!(
                "spectral clamp must satisfy 0 < rho_min < rho_max < 1, got [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        Ok(())
    }
}

/// In-place Oja update `dW_ij = beta (x_i x_j - W_ij x_i^2)`.
pub fn oja_update(w: &mut DMatrix<f64>, x: &DVector<f64>, beta: f64) {
    let d = x.len();
    for j in 0..d {
        let xj = x[j];
        for i in 0..d {
            let xi = x[i];
            let wij = &mut w[(i, j)];
            *wij += beta * (xi * xj - *wij * xi * xi);
        }
    }
}

/// Result of a habituation run.
#[derive(Debug, Clone)]
pub struct HabituationOutcome {
    pub params: ReservoirParams,
    /// Spectral radius of `W` after each epoch (post-projection).
    pub rho_trace: Vec<f64>,
    /// Number of epochs in which the clamp had to rescale `W`.
    pub projections: usize,
    pub final_state: ReservoirState,
    /// Mean reservoir state over the trailing baseline window.
    pub baseline_state: DVector<f64>,
    /// Mean body output over the trailing baseline window.
    pub baseline_action: f64,
}

/// Incremental habituation. Lets callers take frozen snapshots at
/// intermediate epochs without perturbing the learning trajectory.
#[derive(Debug, Clone)]
pub struct Habituator {
    params: ReservoirParams,
    readout: ReadoutWeights,
    cfg: HabituationConfig,
    window: usize,
    x: ReservoirState,
    rng: Rng,
    tail: VecDeque<(DVector<f64>, f64)>,
    rho_trace: Vec<f64>,
    projections: usize,
    epoch: usize,
}

impl Habituator {
    pub fn new(
        params: &ReservoirParams,
        readout: &ReadoutWeights,
        cfg: &HabituationConfig,
        baseline_window: usize,
        rng: Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if readout.w_out.len() != params.dim() {
            return Err(BrgError::DimensionMismatch {
                expected: params.dim(),
                actual: readout.w_out.len(),
            });
        }
        Ok(Self {
            params: params.clone(),
            readout: readout.clone(),
            cfg: cfg.clone(),
            window: baseline_window.max(1),
            x: params.zero_state(),
            rng,
            tail: VecDeque::new(),
            rho_trace: Vec::new(),
            projections: 0,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    /// Runs `epochs` closed-loop rounds (alpha = 1, opponent cooperates),
    /// applying the Oja update and the spectral clamp after each.
    pub fn advance(&mut self, epochs: usize) -> Result<()> {
        let d = self.params.dim();
        for _ in 0..epochs {
            let own = self.readout.readout(&self.x);
            let noise = gaussian_vector(&mut self.rng, d, self.params.noise_std());
            self.x = self.params.step(&self.x, own, 1.0, &noise);

            oja_update(self.params.w_mut(), &self.x, self.cfg.beta);
            let rho = spectral_radius(self.params.w())?;
            let clamped = rho.clamp(self.cfg.rho_min, self.cfg.rho_max);
            let rho_after = if clamped != rho && rho > 0.0 {
                *self.params.w_mut() *= clamped / rho;
                self.projections += 1;
                clamped
            } else {
                rho
            };
            self.rho_trace.push(rho_after);

            let a = self.readout.readout(&self.x);
            self.push_tail(self.x.clone(), a);
            self.epoch += 1;
        }
        Ok(())
    }

    fn push_tail(&mut self, x: DVector<f64>, a: f64) {
        if self.tail.len() == self.window {
            self.tail.pop_front();
        }
        self.tail.push_back((x, a));
    }

    /// Frozen view of the current habituation level. If fewer than
    /// `baseline_window` rounds have elapsed, the baseline window is topped up
    /// with closed-loop rounds on the frozen weights using a cloned stream, so
    /// the learning trajectory itself is untouched.
    pub fn snapshot(&self) -> HabituationOutcome {
        let d = self.params.dim();
        let mut tail: Vec<(DVector<f64>, f64)> = self.tail.iter().cloned().collect();
        let mut x = self.x.clone();
        let mut rng = self.rng.clone();
        while tail.len() < self.window {
            let own = self.readout.readout(&x);
            let noise = gaussian_vector(&mut rng, d, self.params.noise_std());
            x = self.params.step(&x, own, 1.0, &noise);
            let a = self.readout.readout(&x);
            tail.push((x.clone(), a));
        }
        let n = tail.len() as f64;
        let baseline_state = tail.iter().fold(DVector::zeros(d), |acc, (s, _)| acc + s) / n;
        let baseline_action = tail.iter().map(|(_, a)| a).sum::<f64>() / n;
        HabituationOutcome {
            params: self.params.clone(),
            rho_trace: self.rho_trace.clone(),
            projections: self.projections,
            final_state: x,
            baseline_state,
            baseline_action,
        }
    }
}

/// Habituates `params` for `cfg.epochs` rounds. `W_in`, the bias and the
/// readout are never modified.
pub fn habituate(
    params: &ReservoirParams,
    readout: &ReadoutWeights,
    cfg: &HabituationConfig,
    baseline_window: usize,
    rng: Rng,
) -> Result<HabituationOutcome> {
    let mut h = Habituator::new(params, readout, cfg, baseline_window, rng)?;
    h.advance(cfg.epochs)?;
    Ok(h.snapshot())
}
