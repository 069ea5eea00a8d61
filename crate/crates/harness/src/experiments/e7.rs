//! One-at-a-time sweeps of the sentinel parameters against the noisy
//! cooperative opponent.

use brg_core::body::develop_body;
use brg_core::sim::AgentSpec;

use super::{measure, sim_seed, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] =
    &["experiment", "seed", "parameter", "value", "mean_payoff", "mean_alpha", "action_variance"];

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let variants = cfg.e7_variants();

    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E7, 0, job.0);
        let body = develop_body(&cfg.body, seed)?;
        let mut out = Vec::with_capacity(variants.len());
        for (name, value) in &variants {
            let agent = AgentSpec::sentinel(cfg.sentinel_with(name, *value));
            let m = measure(&body, &agent, None, cfg, sim_seed(seed, SimRole::Measure))?;
            out.push((m.mean_payoff, m.mean_alpha, m.variance));
        }
        Ok((out, RhoExtent::of(&body.rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (cells, r)) in &results {
        for ((name, value), &(pay, alpha, var)) in variants.iter().zip(cells) {
            grid.push(vec![
                "E7".into(),
                job.0.into(),
                name.as_str().into(),
                (*value).into(),
                pay.into(),
                alpha.into(),
                var.into(),
            ]);
        }
        rho = rho.merge(*r);
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E7,
        grid,
        &["parameter", "value"],
        &["mean_payoff", "mean_alpha", "action_variance"],
    );
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
