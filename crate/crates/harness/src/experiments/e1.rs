//! Fixed point of the closed loop at full body governance, its linear
//! stability, and how fast a fresh body settles onto it.

use brg_core::analysis::fixed_point::{closed_loop_jacobian, solve_fixed_point};
use brg_core::analysis::stats::mean;
use brg_core::body::develop_body;
use brg_core::game::OpponentSchedule;
use brg_core::reservoir::spectral_radius;
use brg_core::sim::{run_simulation, AgentSpec, SimOptions};
use serde_json::Value;

use super::{column_means, first_sustained, sim_seed, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "a_star",
    "fp_iterations",
    "fp_residual",
    "fp_converged",
    "rho_eff",
    "rho_w",
    "convergence_round",
    "gap_round_10",
    "mean_last_100",
];

/// Round at which the settling gap is reported.
pub const GAP_ROUND: usize = 10;

struct SeedResult {
    a_star: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    rho_eff: f64,
    rho_w: f64,
    body_actions: Vec<f64>,
    convergence: Option<usize>,
    rho: RhoExtent,
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let p = &cfg.e1;
    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E1, 0, job.0);
        let body = develop_body(&cfg.body, seed)?;
        let fp = solve_fixed_point(&body.params, &body.readout, 1.0, &body.state, p.fixed_point_tol, p.fixed_point_max_iters)?;
        let stab = closed_loop_jacobian(&body.params, &body.readout, &fp.x_star)?;
        let rho_w = spectral_radius(body.params.w())?;

        let schedule = OpponentSchedule::cooperate(p.rounds)?;
        let opts = SimOptions { initial_state: Some(body.params.zero_state()), ..Default::default() };
        let trace = run_simulation(&body, &AgentSpec::static_alpha(1.0), &schedule, &cfg.payoff, &opts, sim_seed(seed, SimRole::Measure))?;
        let body_actions = trace.body_actions();
        let convergence = first_sustained(&body_actions, p.sustain, |a| (a - fp.a_star).abs() <= p.tolerance);
        Ok(SeedResult {
            a_star: fp.a_star,
            iterations: fp.iterations,
            residual: fp.residual,
            converged: fp.converged,
            rho_eff: stab.rho_eff,
            rho_w,
            body_actions,
            convergence,
            rho: RhoExtent::of(&body.rho_trace),
        })
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, r) in &results {
        let last = &r.body_actions[r.body_actions.len().saturating_sub(100)..];
        grid.push(vec![
            "E1".into(),
            job.0.into(),
            r.a_star.into(),
            r.iterations.into(),
            r.residual.into(),
            r.converged.into(),
            r.rho_eff.into(),
            r.rho_w.into(),
            r.convergence.into(),
            r.body_actions.get(GAP_ROUND).map(|a| (a - r.a_star).abs()).into(),
            mean(last).into(),
        ]);
        rho = rho.merge(r.rho);
    }

    let mut trace = CsvTable::new(&["t", "mean_body_action", "mean_a_star"]);
    let actions: Vec<Vec<f64>> = results.iter().map(|(_, r)| r.body_actions.clone()).collect();
    let a_star_mean = mean(&results.iter().map(|(_, r)| r.a_star).collect::<Vec<_>>());
    for (t, a) in column_means(&actions).into_iter().enumerate() {
        trace.push(vec![t.into(), a.into(), a_star_mean.into()]);
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E1,
        grid,
        &[],
        &["a_star", "fp_iterations", "rho_eff", "rho_w", "convergence_round", "gap_round_10", "mean_last_100"],
    );
    out.extra.push(("trace", trace));
    let all_stable = results.iter().filter(|(_, r)| r.converged).all(|(_, r)| r.rho_eff < 1.0);
    out.derived.insert("all_converged_fixed_points_stable".into(), Value::Bool(all_stable));
    out.derived.insert(
        "unconverged_seeds".into(),
        results.iter().filter(|(_, r)| !r.converged).map(|(j, _)| j.0).collect::<Vec<_>>().into(),
    );
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
