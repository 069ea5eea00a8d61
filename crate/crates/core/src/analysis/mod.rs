pub mod fixed_point;
pub mod kl;
pub mod metrics;
pub mod stats;

pub use fixed_point::{
    closed_loop_jacobian, closed_loop_map, solve_fixed_point, FixedPointResult, StabilityReport,
};
pub use kl::{kl_gaussian, kl_gaussian_moments, kl_knn, KnnKl, StateSample};
pub use metrics::{
    action_variance, argmin_free_energy, detection_time, free_energy, pre_perturbation_reference,
    recovery_time, FreeEnergyPoint,
};
pub use stats::{geometric_mean, mean, sem, wilcoxon_signed_rank, WilcoxonResult};
