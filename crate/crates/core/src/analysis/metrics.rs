//! Scalar summaries of simulation traces.

use serde::{Deserialize, Serialize};

/// Unbiased sample variance; 0 for fewer than two values.
pub fn action_variance(actions: &[f64]) -> f64 {
    let n = actions.len();
    if n < 2 {
        return 0.0;
    }
    let mean = actions.iter().sum::<f64>() / n as f64;
    actions.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
}

pub fn free_energy(mean_payoff: f64, kl: f64, lambda: f64) -> f64 {
    -mean_payoff + lambda * kl
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyPoint {
    pub alpha: f64,
    pub mean_payoff: f64,
    pub kl: f64,
    pub lambda: f64,
    pub free_energy: f64,
}

impl FreeEnergyPoint {
    pub fn new(alpha: f64, mean_payoff: f64, kl: f64, lambda: f64) -> Self {
        Self { alpha, mean_payoff, kl, lambda, free_energy: free_energy(mean_payoff, kl, lambda) }
    }
}

/// Point with the lowest free energy. Ties resolve to the earliest point.
pub fn argmin_free_energy(points: &[FreeEnergyPoint]) -> Option<&FreeEnergyPoint> {
    points.iter().fold(None, |best: Option<&FreeEnergyPoint>, p| match best {
        Some(b) if b.free_energy <= p.free_energy => Some(b),
        _ => Some(p),
    })
}

/// Rounds from `onset` until `alpha_trace` first reaches `threshold` or below.
pub fn detection_time(alpha_trace: &[f64], onset: usize, threshold: f64) -> Option<usize> {
    alpha_trace.get(onset..)?.iter().position(|a| *a <= threshold)
}

/// Mean of the `window` values preceding `onset` (fewer if the trace is short).
pub fn pre_perturbation_reference(actions: &[f64], onset: usize, window: usize) -> Option<f64> {
    let end = onset.min(actions.len());
    let start = end.saturating_sub(window);
    (end > start).then(|| actions[start..end].iter().sum::<f64>() / (end - start) as f64)
}

/// Rounds after `perturbation_end` until the action regains
/// `fraction * reference` and holds it for `sustain` consecutive rounds.
pub fn recovery_time(
    actions: &[f64],
    perturbation_end: usize,
    reference: f64,
    fraction: f64,
    sustain: usize,
) -> Option<usize> {
    let tail = actions.get(perturbation_end..)?;
    let target = fraction * reference;
    let sustain = sustain.max(1);
    let mut run = 0;
    for (i, a) in tail.iter().enumerate() {
        if *a >= target {
            run += 1;
            if run == sustain {
                return Some(i + 1 - sustain);
            }
        } else {
            run = 0;
        }
    }
    None
}
