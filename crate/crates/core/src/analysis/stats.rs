//! Aggregation across seeds and the exact Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean; 0 for a single value.
pub fn sem(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}

/// Geometric mean of positive values; NaN if any value is not positive.
pub fn geometric_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0)) {
        return f64::NAN;
    }
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Number of non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Exact two-sided p-value.
    pub p_value: f64,
}

/// Exact signed-rank test on paired samples. Zero differences are dropped;
/// tied magnitudes receive average ranks and the null distribution is
/// enumerated over those ranks.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Option<WilcoxonResult> {
    if x.len() != y.len() {
        return None;
    }
    let mut diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return None;
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // doubled ranks keep ties integral
    let mut ranks2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        for r in ranks2.iter_mut().take(j + 1).skip(i) {
            *r = i + j + 2;
        }
        i = j + 1;
    }
    let w_plus2: usize = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: usize = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let stat2 = w_plus2.min(w_minus2);

    // counts[s] = number of sign assignments with doubled positive rank sum s
    let mut counts = vec![0f64; total2 + 1];
    counts[0] = 1.0;
    for r in &ranks2 {
        for s in (*r..=total2).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(n as i32);
    let tail: f64 = counts[..=stat2].iter().sum();
    let p_value = (2.0 * tail / all).min(1.0);
    Some(WilcoxonResult {
        n,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: w_minus2 as f64 / 2.0,
        statistic: stat2 as f64 / 2.0,
        p_value,
    })
}
