//! Self-consistent fixed points of the closed loop at full body governance,
//! and their linear stability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BrgError, Result};
use crate::reservoir::{sigmoid, spectral_radius, ReadoutWeights, ReservoirParams};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub x_star: DVector<f64>,
    pub a_star: f64,
    pub iterations: usize,
    /// Infinity-norm of the last update.
    pub residual: f64,
    pub converged: bool,
}

/// Noise-free closed-loop map: the body acts with its own readout.
pub fn closed_loop_map(
    params: &ReservoirParams,
    readout: &ReadoutWeights,
    a_opp: f64,
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut z = params.drive(x, readout.readout(x), a_opp);
    z.apply(|v| *v = v.tanh());
    z
}

/// Plain Picard iteration of [`closed_loop_map`] from `x_init`.
pub fn solve_fixed_point(
    params: &ReservoirParams,
    readout: &ReadoutWeights,
    a_opp: f64,
    x_init: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointResult> {
    if x_init.len() != params.dim() {
        return Err(BrgError::DimensionMismatch { expected: params.dim(), actual: x_init.len() });
    }
    if !(tol > 0.0) {
        return Err(BrgError::InvalidParameter(format!("fixed-point tolerance must be positive, got {tol}")));
    }
    let mut x = x_init.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        let next = closed_loop_map(params, readout, a_opp, &x);
        residual = (&next - &x).amax();
        x = next;
        iterations += 1;
        if residual <= tol {
            break;
        }
    }
    let a_star = readout.readout(&x);
    Ok(FixedPointResult { x_star: x, a_star, iterations, residual, converged: residual <= tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub jacobian: DMatrix<f64>,
    pub rho_eff: f64,
    pub stable: bool,
}

/// Analytic Jacobian of the closed-loop map at `x_star`:
/// `diag(1 - x*^2) (W + W_in[:,0] sigma'(z) w_out^T)`.
pub fn closed_loop_jacobian(
    params: &ReservoirParams,
    readout: &ReadoutWeights,
    x_star: &DVector<f64>,
) -> Result<StabilityReport> {
    let d = params.dim();
    if x_star.len() != d {
        return Err(BrgError::DimensionMismatch { expected: d, actual: x_star.len() });
    }
    let s = sigmoid(readout.activation(x_star));
    let slope = s * (1.0 - s);
    let mut j = params.w().clone();
    j.ger(slope, &params.w_in().column(0), &readout.w_out, 1.0);
    for (i, mut row) in j.row_iter_mut().enumerate() {
        row *= 1.0 - x_star[i] * x_star[i];
    }
    let rho_eff = spectral_radius(&j)?;
    Ok(StabilityReport { jacobian: j, rho_eff, stable: rho_eff < 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(w: f64, b: f64) -> (ReservoirParams, ReadoutWeights) {
        let p = ReservoirParams::from_parts(
            DMatrix::from_element(1, 1, w),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, b),
            0.0,
        )
        .unwrap();
        (p, ReadoutWeights::zeros(1))
    }

    #[test]
    fn scalar_fixed_point_matches_bisection() {
        let (p, r) = scalar(0.5, 0.1);
        let fp = solve_fixed_point(&p, &r, 1.0, &DVector::zeros(1), 1e-12, 10_000).unwrap();
        assert!(fp.converged);
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - (0.5 * mid + 0.1).tanh() > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(fp.x_star[0], 0.5 * (lo + hi), epsilon = 1e-11);
    }

    #[test]
    fn banach_iteration_bound() {
        // tanh(0.5 x + 0.1) is a contraction with L = 0.5.
        let (p, r) = scalar(0.5, 0.1);
        let x0 = DVector::from_element(1, 0.9);
        let tol = 1e-10;
        let fp = solve_fixed_point(&p, &r, 1.0, &x0, tol, 10_000).unwrap();
        let dist0 = (x0[0] - fp.x_star[0]).abs();
        let bound = ((tol / dist0).ln() / 0.5f64.ln()).ceil() as usize + 2;
        assert!(fp.iterations <= bound, "{} > {bound}", fp.iterations);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let (p, r) = scalar(0.5, 0.1);
        let fp = solve_fixed_point(&p, &r, 1.0, &DVector::from_element(1, 0.9), 1e-14, 2).unwrap();
        assert!(!fp.converged);
        assert_eq!(fp.iterations, 2);
        assert!(fp.residual > 1e-14);
    }

    #[test]
    fn jacobian_without_feedback() {
        let w = DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.4, 0.3]);
        let p = ReservoirParams::from_parts(
            w.clone(),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]),
            DVector::zeros(2),
            0.0,
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.5, -0.3]);
        let rep = closed_loop_jacobian(&p, &ReadoutWeights::zeros(2), &x).unwrap();
        let expect = DMatrix::from_diagonal(&x.map(|v| 1.0 - v * v)) * w;
        assert_relative_eq!(rep.jacobian, expect, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_at_origin() {
        let w = DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.4, 0.3]);
        let w_in = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let p = ReservoirParams::from_parts(w.clone(), w_in.clone(), DVector::zeros(2), 0.0).unwrap();
        let r = ReadoutWeights { w_out: DVector::from_vec(vec![1.5, -0.7]), b_out: 0.4 };
        let rep = closed_loop_jacobian(&p, &r, &DVector::zeros(2)).unwrap();
        let s = sigmoid(0.4);
        let expect = w + w_in.column(0) * (s * (1.0 - s)) * r.w_out.transpose();
        assert_relative_eq!(rep.jacobian, expect, epsilon = 1e-15);
        assert_eq!(rep.stable, rep.rho_eff < 1.0);
    }
}
