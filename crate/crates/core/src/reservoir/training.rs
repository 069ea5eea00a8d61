//! Developmental readout training by ridge regression in logit space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{logit, ReadoutWeights, ReservoirParams};
use crate::error::{BrgError, Result};
use crate::rng::{gaussian_vector, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutTraining {
    pub coop_target: f64,
    pub defect_target: f64,
    pub n_per_class: usize,
    pub burn_in: usize,
    pub ridge_lambda: f64,
}

impl Default for ReadoutTraining {
    fn default() -> Self {
        Self {
            coop_target: 0.95,
            defect_target: 0.05,
            n_per_class: 2000,
            burn_in: 500,
            ridge_lambda: 1e-3,
        }
    }
}

impl ReadoutTraining {
    pub fn validate(&self, dim: usize) -> Result<()> {
        for (name, t) in [("coop_target", self.coop_target), ("defect_target", self.defect_target)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(BrgError::InvalidParameter(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if self.n_per_class < dim {
            return Err(BrgError::InvalidParameter(format!(
                "n_per_class ({}) must be at least the reservoir dim ({dim})",
                self.n_per_class
            )));
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(BrgError::InvalidParameter("ridge_lambda must be positive".into()));
        }
        Ok(())
    }
}

/// Drives the reservoir from the origin with `a = a_opp = action` and returns
/// the `n` states following `burn_in` steps, one per row.
pub fn collect_driven_states(
    params: &ReservoirParams,
    action: f64,
    n: usize,
    burn_in: usize,
    rng: &mut Rng,
) -> DMatrix<f64> {
    let d = params.dim();
    let mut states = DMatrix::zeros(n, d);
    let mut x = params.zero_state();
    for t in 0..burn_in + n {
        let noise = gaussian_vector(rng, d, params.noise_std());
        x = params.step(&x, action, action, &noise);
        if t >= burn_in {
            states.row_mut(t - burn_in).copy_from(&x.transpose());
        }
    }
    states
}

/// Ridge regression with an unpenalised intercept.
///
/// Solves `(A^T A + lambda P) c = A^T y` for `A = [X 1]`, where `P` is the
/// identity with a zero in the intercept slot.
pub fn ridge_fit(design: &DMatrix<f64>, targets: &DVector<f64>, lambda: f64) -> Result<ReadoutWeights> {
    let (n, d) = design.shape();
    if targets.len() != n {
        return Err(BrgError::DimensionMismatch { expected: n, actual: targets.len() });
    }
    let mut aug = DMatrix::zeros(n, d + 1);
    aug.view_mut((0, 0), (n, d)).copy_from(design);
    aug.column_mut(d).fill(1.0);

    let mut normal = aug.tr_mul(&aug);
    for i in 0..d {
        normal[(i, i)] += lambda;
    }
    let rhs = aug.tr_mul(targets);

    let coef = match normal.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => normal.lu().solve(&rhs).ok_or_else(|| {
            BrgError::Construction("ridge normal equations are singular".into())
        })?,
    };
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(BrgError::Construction("ridge solution is not finite".into()));
    }
    Ok(ReadoutWeights { w_out: coef.rows(0, d).into_owned(), b_out: coef[d] })
}

/// Trains the readout on cooperative (`a = a_opp = 1`) and defecting
/// (`a = a_opp = 0`) drives, regressing pre-sigmoid activations onto the
/// logits of the two targets.
pub fn train_readout(
    params: &ReservoirParams,
    cfg: &ReadoutTraining,
    rng: &mut Rng,
) -> Result<ReadoutWeights> {
    cfg.validate(params.dim())?;
    let n = cfg.n_per_class;
    let coop = collect_driven_states(params, 1.0, n, cfg.burn_in, rng);
    let defect = collect_driven_states(params, 0.0, n, cfg.burn_in, rng);

    let d = params.dim();
    let mut design = DMatrix::zeros(2 * n, d);
    design.view_mut((0, 0), (n, d)).copy_from(&coop);
    design.view_mut((n, 0), (n, d)).copy_from(&defect);
    let targets = DVector::from_fn(2 * n, |i, _| {
        if i < n {
            logit(cfg.coop_target)
        } else {
            logit(cfg.defect_target)
        }
    });
    ridge_fit(&design, &targets, cfg.ridge_lambda)
}
