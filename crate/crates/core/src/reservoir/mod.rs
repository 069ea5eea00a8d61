//! Echo state network body: construction, state update and sigmoid readout.
//!
//! The reservoir evolves as `x' = tanh(W x + W_in [a, a_opp] + b) + xi` and
//! emits `sigma(w_out . x + b_out)`. `W_in` and `b` are fixed at construction;
//! only `W` is ever adapted (see [`habituation`]).

pub mod habituation;
pub mod spectral;
pub mod training;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BrgError, Result};
use crate::rng::Rng;

pub use habituation::{habituate, oja_update, HabituationConfig, HabituationOutcome};
pub use spectral::spectral_radius;
pub use training::{collect_driven_states, ridge_fit, train_readout, ReadoutTraining};

/// A d-dimensional reservoir state.
pub type ReservoirState = DVector<f64>;

/// Construction settings for a random reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSpec {
    pub dim: usize,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub bias_std: f64,
    pub noise_std: f64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        Self {
            dim: 30,
            spectral_radius: 0.9,
            input_scale: 0.5,
            bias_std: 0.1,
            noise_std: 0.15,
        }
    }
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(BrgError::InvalidParameter("reservoir dim must be >= 1".into()));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return Err(BrgError::InvalidParameter(format!(
                "spectral_radius must lie in (0, 1), got {}",
                self.spectral_radius
            )));
        }
        if !(self.input_scale > 0.0) {
            return Err(BrgError::InvalidParameter("input_scale must be positive".into()));
        }
        if !(self.bias_std >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(BrgError::InvalidParameter(
                "bias_std and noise_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Draws `W ~ N(0,1)` (rescaled to the target spectral radius), then
    /// `W_in ~ N(0, input_scale^2)`, then `b ~ N(0, bias_std^2)`, in that order.
    pub fn build(&self, rng: &mut Rng) -> Result<ReservoirParams> {
        self.validate()?;
        let d = self.dim;
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let mut w = DMatrix::from_fn(d, d, |_, _| normal());
        let w_in = DMatrix::from_fn(d, 2, |_, _| normal() * self.input_scale);
        let bias = DVector::from_fn(d, |_, _| normal() * self.bias_std);

        let rho = spectral_radius(&w)?;
        if !(rho.is_finite() && rho > 0.0) {
            return Err(BrgError::Construction(format!(
                "random recurrent matrix has spectral radius {rho}; cannot rescale"
            )));
        }
        w *= self.spectral_radius / rho;

        Ok(ReservoirParams {
            w,
            w_in,
            bias,
            noise_std: self.noise_std,
            spectral_radius_target: self.spectral_radius,
        })
    }
}

/// Convenience wrapper matching the usual `(d, rho, scale, seed)` call shape.
pub fn build_reservoir(
    dim: usize,
    rho_target: f64,
    input_scale: f64,
    seed: u64,
) -> Result<ReservoirParams> {
    let spec = ReservoirSpec {
        dim,
        spectral_radius: rho_target,
        input_scale,
        ..ReservoirSpec::default()
    };
    spec.build(&mut crate::rng::rng_from_seed(seed))
}

/// Weights of a body reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirParams {
    w: DMatrix<f64>,
    w_in: DMatrix<f64>,
    bias: DVector<f64>,
    noise_std: f64,
    spectral_radius_target: f64,
}

impl ReservoirParams {
    /// Assembles parameters from explicit matrices (toy systems, snapshots).
    pub fn from_parts(
        w: DMatrix<f64>,
        w_in: DMatrix<f64>,
        bias: DVector<f64>,
        noise_std: f64,
    ) -> Result<Self> {
        let d = bias.len();
        if d == 0 {
            return Err(BrgError::InvalidParameter("reservoir dim must be >= 1".into()));
        }
        if w.shape() != (d, d) {
            return Err(BrgError::DimensionMismatch { expected: d * d, actual: w.len() });
        }
        if w_in.shape() != (d, 2) {
            return Err(BrgError::DimensionMismatch { expected: d * 2, actual: w_in.len() });
        }
        if !(noise_std >= 0.0) {
            return Err(BrgError::InvalidParameter("noise_std must be nonnegative".into()));
        }
        let rho = spectral_radius(&w)?;
        Ok(Self { w, w_in, bias, noise_std, spectral_radius_target: rho })
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn spectral_radius_target(&self) -> f64 {
        self.spectral_radius_target
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub(crate) fn w_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.w
    }

    /// Pre-activation `W x + W_in [own, opp] + b`.
    pub fn drive(&self, x: &ReservoirState, own: f64, opp: f64) -> DVector<f64> {
        let mut z = &self.w * x + &self.bias;
        z.axpy(own, &self.w_in.column(0), 1.0);
        z.axpy(opp, &self.w_in.column(1), 1.0);
        z
    }

    /// One noisy reservoir update. Pure: `x` is not modified.
    pub fn step(
        &self,
        x: &ReservoirState,
        own: f64,
        opp: f64,
        noise: &DVector<f64>,
    ) -> ReservoirState {
        debug_assert_eq!(noise.len(), self.dim());
        let mut next = self.drive(x, own, opp);
        next.apply(|v| *v = v.tanh());
        next += noise;
        next
    }

    pub fn zero_state(&self) -> ReservoirState {
        DVector::zeros(self.dim())
    }
}

/// Free-function form of [`ReservoirParams::step`].
pub fn step(
    state: &ReservoirState,
    params: &ReservoirParams,
    own_action: f64,
    opp_action: f64,
    noise_draw: &DVector<f64>,
) -> ReservoirState {
    params.step(state, own_action, opp_action, noise_draw)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Linear readout inside a logistic sigmoid. Frozen after developmental training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    pub w_out: DVector<f64>,
    pub b_out: f64,
}

impl ReadoutWeights {
    pub fn zeros(dim: usize) -> Self {
        Self { w_out: DVector::zeros(dim), b_out: 0.0 }
    }

    pub fn activation(&self, x: &ReservoirState) -> f64 {
        self.w_out.dot(x) + self.b_out
    }

    /// Body action `sigma(w_out . x + b_out)`, strictly inside (0, 1) for finite
    /// activations of moderate size.
    pub fn readout(&self, x: &ReservoirState) -> f64 {
        sigmoid(self.activation(x))
    }
}

pub fn readout(state: &ReservoirState, weights: &ReadoutWeights) -> f64 {
    weights.readout(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vector, rng_from_seed};
    use approx::assert_relative_eq;

    #[test]
    fn build_hits_target_radius() {
        let p = build_reservoir(30, 0.9, 0.5, 42).unwrap();
        let rho = spectral_radius(p.w()).unwrap();
        assert_relative_eq!(rho, 0.9, max_relative = 1e-6);
        assert_eq!(p.w_in().shape(), (30, 2));
    }

    #[test]
    fn one_by_one_radius_is_abs_entry() {
        let p = build_reservoir(1, 0.5, 0.5, 3).unwrap();
        assert_relative_eq!(p.w()[(0, 0)].abs(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_reservoir(12, 0.8, 0.5, 7).unwrap();
        let b = build_reservoir(12, 0.8, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = build_reservoir(12, 0.8, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_reservoir(0, 0.9, 0.5, 1).is_err());
        assert!(build_reservoir(4, 1.2, 0.5, 1).is_err());
        assert!(build_reservoir(4, 0.9, 0.0, 1).is_err());
    }

    #[test]
    fn zero_weights_map_to_origin() {
        let d = 4;
        let p = ReservoirParams::from_parts(
            DMatrix::zeros(d, d),
            DMatrix::zeros(d, 2),
            DVector::zeros(d),
            0.0,
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.9, 0.1]);
        let next = p.step(&x, 0.7, 0.2, &DVector::zeros(d));
        assert!(next.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_step_is_tanh_of_input() {
        let p = ReservoirParams::from_parts(
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::zeros(1),
            0.0,
        )
        .unwrap();
        let next = step(&DVector::zeros(1), &p, 1.0, 0.0, &DVector::zeros(1));
        assert_relative_eq!(next[0], 1.0f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(next[0], 0.7616, epsilon = 1e-4);
    }

    #[test]
    fn step_is_pure() {
        let p = build_reservoir(8, 0.9, 0.5, 1).unwrap();
        let mut rng = rng_from_seed(5);
        let x = gaussian_vector(&mut rng, 8, 0.3);
        let noise = gaussian_vector(&mut rng, 8, 0.15);
        let before = x.clone();
        let a = p.step(&x, 0.4, 1.0, &noise);
        let b = p.step(&x, 0.4, 1.0, &noise);
        assert_eq!(x, before);
        assert_eq!(a, b);
    }

    #[test]
    fn fading_memory_forgets_initial_state() {
        let p = build_reservoir(30, 0.9, 0.5, 11).unwrap();
        let mut rng = rng_from_seed(12);
        let mut xa = gaussian_vector(&mut rng, 30, 0.8).map(f64::tanh);
        let mut xb = gaussian_vector(&mut rng, 30, 0.8).map(f64::tanh);
        let zero = DVector::zeros(30);
        use rand::Rng as _;
        for _ in 0..200 {
            let own: f64 = rng.random();
            let opp: f64 = rng.random();
            xa = p.step(&xa, own, opp, &zero);
            xb = p.step(&xb, own, opp, &zero);
        }
        assert!((xa - xb).norm() < 1e-3);
    }

    #[test]
    fn readout_edge_values() {
        let r = ReadoutWeights::zeros(3);
        assert_eq!(r.readout(&DVector::from_vec(vec![5.0, -2.0, 1.0])), 0.5);
        let big = ReadoutWeights { w_out: DVector::zeros(3), b_out: 30.0 };
        let y = big.readout(&DVector::zeros(3));
        assert!(y < 1.0 && y > 0.999_999);
    }

    #[test]
    fn sigmoid_is_stable_for_large_arguments() {
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
        assert_relative_eq!(logit(sigmoid(1.3)), 1.3, epsilon = 1e-12);
    }
}
