//! Seed derivation and per-purpose random streams.
//!
//! Every random quantity in a run is drawn from a ChaCha8 stream whose seed is
//! derived from a master seed and a short path of integers (experiment id,
//! cell index, seed index, stream label). Derivation is a chain of SplitMix64
//! finalizers, so streams are independent for practical purposes and the
//! whole run is a pure function of its inputs.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of integers into a single seed. Order-sensitive.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(GOLDEN))))
}

/// Labels for the independent streams a single agent consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Build = 1,
    Training = 2,
    Habituation = 3,
    Baseline = 4,
    Opponent = 5,
    Noise = 6,
    Jitter = 7,
    Sampling = 8,
}

pub fn stream(seed: u64, label: Stream) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, &[label as u64]))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Draws an isotropic Gaussian vector with the given standard deviation.
///
/// Always consumes `dim` normal variates, even when `std == 0`, so that
/// noise-free and noisy runs stay aligned on the same stream.
pub fn gaussian_vector(rng: &mut Rng, dim: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}
