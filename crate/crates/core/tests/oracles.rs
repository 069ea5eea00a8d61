//! Checks against independent reference computations: bisection, SVD least
//! squares, closed-form Gaussian divergences and finite differences.

use brg_core::analysis::{
    closed_loop_jacobian, closed_loop_map, kl_gaussian, kl_gaussian_moments, kl_knn, solve_fixed_point, StateSample,
};
use brg_core::body::{develop_body, BodySpec};
use brg_core::game::{OpponentSchedule, PayoffMatrix};
use brg_core::reservoir::{ridge_fit, ReadoutWeights, ReservoirParams};
use brg_core::rng::{gaussian_vector, rng_from_seed};
use brg_core::sim::{run_simulation, AgentSpec, SimOptions};
use nalgebra::{DMatrix, DVector};

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn scalar_map(w: f64, b: f64) -> (ReservoirParams, ReadoutWeights) {
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
    let (p, r) = scalar_map(0.5, 0.1);
    let root = bisect(|x| x - (0.5 * x + 0.1).tanh(), -1.0, 1.0);
    let fp = solve_fixed_point(&p, &r, 1.0, &DVector::zeros(1), 1e-10, 10_000).unwrap();
    assert!(fp.converged);
    assert!((fp.x_star[0] - root).abs() < 1e-9, "{} vs {root}", fp.x_star[0]);
}

#[test]
fn scalar_iterations_within_contraction_bound() {
    let lipschitz: f64 = 0.5;
    let tol: f64 = 1e-10;
    let (p, r) = scalar_map(lipschitz, 0.1);
    let root = bisect(|x| x - (0.5 * x + 0.1).tanh(), -1.0, 1.0);
    let fp = solve_fixed_point(&p, &r, 1.0, &DVector::zeros(1), tol, 10_000).unwrap();
    let bound = (tol / root.abs()).ln() / lipschitz.ln() + 1.0;
    assert!((fp.iterations as f64) <= bound, "{} > {bound}", fp.iterations);
}

#[test]
fn unconverged_result_is_reported_not_raised() {
    let (p, r) = scalar_map(0.5, 0.1);
    let fp = solve_fixed_point(&p, &r, 1.0, &DVector::zeros(1), 1e-10, 3).unwrap();
    assert!(!fp.converged);
    assert_eq!(fp.iterations, 3);
    assert!(fp.residual > 1e-10);
}

/// Ridge solution through the stacked least-squares system
/// `[A; sqrt(lambda) P] c = [y; 0]`, solved by SVD.
fn ridge_by_svd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let (n, d) = x.shape();
    let mut a = DMatrix::zeros(n + d, d + 1);
    a.view_mut((0, 0), (n, d)).copy_from(x);
    a.view_mut((0, d), (n, 1)).fill(1.0);
    for i in 0..d {
        a[(n + i, i)] = lambda.sqrt();
    }
    let mut rhs = DVector::zeros(n + d);
    rhs.rows_mut(0, n).copy_from(y);
    a.svd(true, true).solve(&rhs, 1e-14).unwrap()
}

#[test]
fn ridge_matches_stacked_least_squares() {
    let mut rng = rng_from_seed(11);
    let (n, d) = (60, 5);
    let x = DMatrix::from_fn(n, d, |_, _| gaussian_vector(&mut rng, 1, 1.0)[0]);
    let y = DVector::from_fn(n, |i, _| x.row(i).sum() * 0.3 + 2.0 + 0.1 * gaussian_vector(&mut rng, 1, 1.0)[0]);
    for lambda in [1e-3, 0.5, 10.0] {
        let fit = ridge_fit(&x, &y, lambda).unwrap();
        let oracle = ridge_by_svd(&x, &y, lambda);
        for i in 0..d {
            assert!((fit.w_out[i] - oracle[i]).abs() < 1e-9, "lambda {lambda} coef {i}");
        }
        assert!((fit.b_out - oracle[d]).abs() < 1e-9, "lambda {lambda} intercept");
    }
}

fn gaussian_sample(n: usize, mean: &[f64], std: f64, seed: u64) -> StateSample {
    let mut rng = rng_from_seed(seed);
    let mu = DVector::from_row_slice(mean);
    let rows: Vec<DVector<f64>> = (0..n).map(|_| &mu + gaussian_vector(&mut rng, mean.len(), std)).collect();
    StateSample::from_rows(mean.len(), rows.iter()).unwrap()
}

/// `KL(N(mu_p, s_p^2 I) || N(mu_q, s_q^2 I))`.
fn isotropic_kl(mu_p: &[f64], s_p: f64, mu_q: &[f64], s_q: f64) -> f64 {
    let d = mu_p.len() as f64;
    let dist2: f64 = mu_p.iter().zip(mu_q).map(|(a, b)| (a - b).powi(2)).sum();
    let r = (s_p / s_q).powi(2);
    0.5 * (d * r + dist2 / (s_q * s_q) - d + d * (1.0 / r).ln())
}

#[test]
fn knn_same_distribution_near_zero() {
    let p = gaussian_sample(2000, &[0.0; 3], 1.0, 1);
    let q = gaussian_sample(2000, &[0.0; 3], 1.0, 2);
    let kl = kl_knn(&p, &q, 5).unwrap();
    assert!(kl.raw.abs() <= 0.05, "raw {}", kl.raw);
    assert!((0.0..=0.05).contains(&kl.estimate));
    assert!(!kl.jittered);
}

#[test]
fn knn_unit_shift_in_one_dimension() {
    let oracle = isotropic_kl(&[0.0], 1.0, &[1.0], 1.0);
    assert_eq!(oracle, 0.5);
    let p = gaussian_sample(5000, &[0.0], 1.0, 3);
    let q = gaussian_sample(5000, &[1.0], 1.0, 4);
    let kl = kl_knn(&p, &q, 5).unwrap().estimate;
    assert!((kl - oracle).abs() <= 0.1, "{kl}");
}

#[test]
fn knn_relative_error_low_dimensions() {
    let cases: [(&[f64], f64, &[f64], f64); 3] = [
        (&[0.0, 0.0], 1.0, &[1.0, 0.5], 1.0),
        (&[0.0, 0.0, 0.0], 1.0, &[0.0, 0.0, 0.0], 2.0_f64.sqrt()),
        (&[0.0, 0.0, 0.0], 1.0, &[1.0, 0.0, 0.0], 1.0),
    ];
    for (i, (mp, sp, mq, sq)) in cases.into_iter().enumerate() {
        let oracle = isotropic_kl(mp, sp, mq, sq);
        let p = gaussian_sample(5000, mp, sp, 10 + i as u64);
        let q = gaussian_sample(5000, mq, sq, 20 + i as u64);
        let kl = kl_knn(&p, &q, 5).unwrap().estimate;
        assert!((kl - oracle).abs() <= 0.2 * oracle, "case {i}: {kl} vs {oracle}");
    }
}

#[test]
fn gaussian_kl_closed_forms() {
    let one = DMatrix::identity(1, 1);
    let v = kl_gaussian_moments(&DVector::zeros(1), &one, &DVector::from_element(1, 1.0), &one).unwrap();
    assert_eq!(v, 0.5);
    let p = gaussian_sample(500, &[0.2, -0.1], 0.7, 5);
    assert!(kl_gaussian(&p, &p).unwrap().abs() < 1e-12);
    let oracle = isotropic_kl(&[0.0; 3], 1.0, &[0.0; 3], 2.0_f64.sqrt());
    let v = kl_gaussian_moments(&DVector::zeros(3), &DMatrix::identity(3, 3), &DVector::zeros(3), &(DMatrix::identity(3, 3) * 2.0))
        .unwrap();
    assert!((v - oracle).abs() < 1e-12);
}

fn default_body(seed: u64) -> brg_core::body::Body {
    develop_body(&BodySpec::default(), seed).unwrap()
}

fn finite_difference_jacobian(p: &ReservoirParams, r: &ReadoutWeights, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut j = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[k] += h;
        dn[k] -= h;
        let col = (closed_loop_map(p, r, 1.0, &up) - closed_loop_map(p, r, 1.0, &dn)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

#[test]
fn jacobian_matches_central_differences() {
    for seed in [1, 2, 3] {
        let body = default_body(seed);
        let fp = solve_fixed_point(&body.params, &body.readout, 1.0, &body.state, 1e-10, 10_000).unwrap();
        assert!(fp.converged);
        let analytic = closed_loop_jacobian(&body.params, &body.readout, &fp.x_star).unwrap();
        let fd = finite_difference_jacobian(&body.params, &body.readout, &fp.x_star, 1e-6);
        let err = (&analytic.jacobian - &fd).amax();
        assert!(err <= 1e-5, "seed {seed}: max error {err}");
    }
}

#[test]
fn habituated_fixed_point_is_cooperative_and_locally_attracting() {
    let body = default_body(4);
    let fp = solve_fixed_point(&body.params, &body.readout, 1.0, &body.state, 1e-10, 10_000).unwrap();
    assert!(fp.converged);
    assert!((0.95..=0.995).contains(&fp.a_star), "{}", fp.a_star);
    let resid = (closed_loop_map(&body.params, &body.readout, 1.0, &fp.x_star) - &fp.x_star).amax();
    assert!(resid <= 1e-10);

    let stab = closed_loop_jacobian(&body.params, &body.readout, &fp.x_star).unwrap();
    assert!(stab.rho_eff < 0.99);
    let mut x = fp.x_star.add_scalar(1e-3);
    for _ in 0..50 {
        x = closed_loop_map(&body.params, &body.readout, 1.0, &x);
    }
    assert!((&x - &fp.x_star).amax() <= 1e-6);
}

#[test]
fn body_alone_settles_near_fixed_point_action() {
    let body = default_body(5);
    let tr = run_simulation(
        &body,
        &AgentSpec::static_alpha(1.0),
        &OpponentSchedule::cooperate(400).unwrap(),
        &PayoffMatrix::default(),
        &SimOptions::default(),
        9,
    )
    .unwrap();
    let fp = solve_fixed_point(&body.params, &body.readout, 1.0, &body.state, 1e-10, 10_000).unwrap();
    let tail: Vec<f64> = tr.actions()[300..].to_vec();
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((m - fp.a_star).abs() <= 0.02, "{m} vs {}", fp.a_star);
}

#[test]
fn echo_state_forgets_initial_conditions() {
    for seed in 0..20u64 {
        let spec = BodySpec::default();
        let params = spec.reservoir.build(&mut rng_from_seed(seed)).unwrap().with_noise_std(0.0);
        let mut rng = rng_from_seed(1000 + seed);
        let inputs: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let v = gaussian_vector(&mut rng, 2, 1.0);
                (v[0].abs().min(1.0), v[1].abs().min(1.0))
            })
            .collect();
        let mut a = gaussian_vector(&mut rng, 30, 0.5).map(|v| v.clamp(-1.0, 1.0));
        let mut b = gaussian_vector(&mut rng, 30, 0.5).map(|v| v.clamp(-1.0, 1.0));
        let zero = DVector::zeros(30);
        for (own, opp) in inputs {
            a = params.step(&a, own, opp, &zero);
            b = params.step(&b, own, opp, &zero);
        }
        assert!((&a - &b).norm() < 1e-3, "seed {seed}: {}", (&a - &b).norm());
    }
}
