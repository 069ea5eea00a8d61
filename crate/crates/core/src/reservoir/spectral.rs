use nalgebra::DMatrix;

use crate::error::{BrgError, Result};

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITERS: usize = 10_000;
const POWER_ITERS: usize = 2_000;

/// Largest eigenvalue modulus of a square matrix.
///
/// Uses a real Schur decomposition (exact up to rounding for the sizes used
/// here). If the QR iteration fails to converge, a normalised power
/// iteration supplies the estimate carried in the error.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(BrgError::DimensionMismatch { expected: rows, actual: cols });
    }
    if rows == 0 {
        return Ok(0.0);
    }
    if rows == 1 {
        return Ok(m[(0, 0)].abs());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(BrgError::InvalidParameter("matrix has non-finite entries".into()));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    match m.clone().try_schur(SCHUR_EPS, SCHUR_MAX_ITERS) {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        None => Err(BrgError::SpectralNonConvergence {
            iterations: SCHUR_MAX_ITERS,
            last_estimate: power_estimate(m, POWER_ITERS),
        }),
    }
}

/// Gelfand-style estimate `||M^k v||^(1/k)` with per-step renormalisation.
fn power_estimate(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut log_growth = 0.0;
    for _ in 0..iters {
        v = m * v;
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return 0.0;
        }
        log_growth += norm.ln();
        v /= norm;
    }
    (log_growth / iters as f64).exp()
}
