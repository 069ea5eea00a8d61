//! State-space KL divergence: the k-nearest-neighbour estimator used for
//! complexity cost, plus a moment-matched Gaussian cross-check.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{BrgError, Result};
use crate::rng::{rng_from_seed, Rng};

/// Jitter amplitude used when coincident points make a neighbour distance 0.
pub const JITTER_SCALE: f64 = 1e-12;
const JITTER_SEED: u64 = 0x6a69_7474_6572;
/// Largest covariance condition number accepted by [`kl_gaussian`].
pub const MAX_CONDITION: f64 = 1e12;
pub const COV_RIDGE: f64 = 1e-8;

/// Points in state space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    dim: usize,
    data: Vec<f64>,
}

impl StateSample {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * n) }
    }

    pub fn from_rows<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        let mut s = Self::new(dim);
        for r in rows {
            s.push(r)?;
        }
        Ok(s)
    }

    /// One point per row of `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self { dim: d, data }
    }

    pub fn push(&mut self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(BrgError::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        self.data.extend(x.iter());
        Ok(())
    }

    /// Overwrites point `i`.
    pub fn replace(&mut self, i: usize, x: &DVector<f64>) {
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(x.as_slice());
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.len() as f64;
        let mut m = DVector::zeros(self.dim);
        for i in 0..self.len() {
            for (mj, v) in m.iter_mut().zip(self.point(i)) {
                *mj += v;
            }
        }
        m / n
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        let mu = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        let mut dev = DVector::zeros(self.dim);
        for i in 0..n {
            for (k, v) in self.point(i).iter().enumerate() {
                dev[k] = v - mu[k];
            }
            c.syger(1.0, &dev, &dev, 1.0);
        }
        c.fill_upper_triangle_with_lower_triangle();
        c / (n as f64 - 1.0)
    }

    fn jittered(&self, rng: &mut Rng) -> Self {
        let data = self.data.iter().map(|v| v + JITTER_SCALE * (rng.random::<f64>() - 0.5)).collect();
        Self { dim: self.dim, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnKl {
    /// Estimate floored at zero.
    pub estimate: f64,
    /// Estimate before flooring.
    pub raw: f64,
    /// Set when coincident points forced the jitter fallback.
    pub jittered: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-th smallest entry of `buf` (1-based `k`), reordering `buf`.
fn kth_smallest(buf: &mut [f64], k: usize) -> f64 {
    let (_, v, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *v
}

fn knn_raw(p: &StateSample, q: &StateSample, k: usize) -> Option<f64> {
    let (n, m, d) = (p.len(), q.len(), p.dim());
    let mut within = vec![0.0; n - 1];
    let mut across = vec![0.0; m];
    let mut sum = 0.0;
    for i in 0..n {
        let xi = p.point(i);
        let mut slot = 0;
        for j in 0..n {
            if j != i {
                within[slot] = sq_dist(xi, p.point(j));
                slot += 1;
            }
        }
        for (j, s) in across.iter_mut().enumerate() {
            *s = sq_dist(xi, q.point(j));
        }
        let r2 = kth_smallest(&mut within, k);
        let s2 = kth_smallest(&mut across, k);
        if r2 == 0.0 || s2 == 0.0 {
            return None;
        }
        // log(s/r) from squared distances
        sum += 0.5 * (s2.ln() - r2.ln());
    }
    Some(d as f64 / n as f64 * sum + (m as f64 / (n as f64 - 1.0)).ln())
}

/// Nearest-neighbour estimate of `KL(p || q)` from samples, with Euclidean
/// distances and exact brute-force search.
pub fn kl_knn(p: &StateSample, q: &StateSample, k: usize) -> Result<KnnKl> {
    if p.dim() != q.dim() {
        return Err(BrgError::DimensionMismatch { expected: p.dim(), actual: q.dim() });
    }
    if k == 0 {
        return Err(BrgError::InvalidParameter("kNN order k must be at least 1".into()));
    }
    let n_min = p.len().min(q.len());
    if p.len() < k + 1 || q.len() < k {
        return Err(BrgError::SampleTooSmall { k, n: n_min });
    }
    let (raw, jittered) = match knn_raw(p, q, k) {
        Some(v) => (v, false),
        None => {
            let mut rng = rng_from_seed(JITTER_SEED);
            let pj = p.jittered(&mut rng);
            let qj = q.jittered(&mut rng);
            let v = knn_raw(&pj, &qj, k).ok_or_else(|| {
                BrgError::InvalidParameter("zero neighbour distance persists after jitter".into())
            })?;
            (v, true)
        }
    };
    Ok(KnnKl { estimate: raw.max(0.0), raw, jittered })
}

/// Closed-form `KL(N(mu_p, cov_p) || N(mu_q, cov_q))`.
pub fn kl_gaussian_moments(
    mu_p: &DVector<f64>,
    cov_p: &DMatrix<f64>,
    mu_q: &DVector<f64>,
    cov_q: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu_p.len();
    for (m, c) in [(mu_p, cov_p), (mu_q, cov_q)] {
        if m.len() != d || c.shape() != (d, d) {
            return Err(BrgError::DimensionMismatch { expected: d, actual: m.len() });
        }
    }
    let chol_q = checked_cholesky(cov_q)?;
    let chol_p = checked_cholesky(cov_p)?;
    let trace = chol_q.solve(cov_p).trace();
    let diff = mu_q - mu_p;
    let maha = diff.dot(&chol_q.solve(&diff));
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    };
    Ok(0.5 * (trace + maha - d as f64 + logdet(&chol_q) - logdet(&chol_p)))
}

fn checked_cholesky(c: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let eig = c.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(BrgError::IllConditioned { condition });
    }
    c.clone().cholesky().ok_or(BrgError::IllConditioned { condition })
}

/// Moment-matched Gaussian KL between two samples, with `1e-8 I` added to
/// each covariance.
pub fn kl_gaussian(p: &StateSample, q: &StateSample) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(BrgError::DimensionMismatch { expected: p.dim(), actual: q.dim() });
    }
    for s in [p, q] {
        if s.len() < 2 {
            return Err(BrgError::SampleTooSmall { k: 1, n: s.len() });
        }
    }
    let ridge = DMatrix::identity(p.dim(), p.dim()) * COV_RIDGE;
    let cp = p.covariance() + &ridge;
    let cq = q.covariance() + &ridge;
    kl_gaussian_moments(&p.mean(), &cp, &q.mean(), &cq)
}
