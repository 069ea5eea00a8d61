//! Metrics measured on frozen snapshots taken along one habituation
//! trajectory per seed.

use brg_core::body::{habituator, Body};
use brg_core::reservoir::spectral_radius;

use super::{baseline_sample, measure, sim_seed, Contender, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::error::Result;
use crate::output::{CsvTable, Row};

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "habituation",
    "agent",
    "alpha",
    "kl_knn",
    "action_variance",
    "mean_payoff",
    "mean_alpha",
    "rho_w",
];

pub const TRACE_COLUMNS: &[&str] = &["seed", "epoch", "rho_w"];

/// Habituation depths at which measurements are taken.
pub fn levels(max_epochs: usize, interval: usize) -> Vec<usize> {
    (0..=max_epochs).step_by(interval).collect()
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let p = &cfg.e4;
    let mut agents: Vec<Contender> = p.static_alphas.iter().map(|&a| Contender::fixed(a)).collect();
    if p.include_sentinel {
        agents.push(Contender::sentinel(cfg));
    }
    let depths = levels(p.max_epochs, p.interval);

    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E4, 0, job.0);
        let (mut hab, readout) = habituator(&cfg.body, seed)?;
        let mut rows: Vec<Row> = Vec::new();
        for &h in &depths {
            hab.advance(h - hab.epoch())?;
            let body = Body::from_outcome(readout.clone(), hab.snapshot());
            let rho_w = spectral_radius(body.params.w())?;
            let baseline = baseline_sample(&body, cfg, sim_seed(seed, SimRole::Baseline))?;
            for c in &agents {
                let m = measure(&body, &c.agent, Some(&baseline), cfg, sim_seed(seed, SimRole::Measure))?;
                rows.push(vec![
                    "E4".into(),
                    job.0.into(),
                    h.into(),
                    c.kind.into(),
                    c.alpha.into(),
                    m.kl.map(|k| k.estimate).into(),
                    m.variance.into(),
                    m.mean_payoff.into(),
                    m.mean_alpha.into(),
                    rho_w.into(),
                ]);
            }
        }
        Ok((rows, hab.snapshot().rho_trace))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut trace = CsvTable::new(TRACE_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (rows, rho_trace)) in results {
        rows.into_iter().for_each(|r| grid.push(r));
        for (e, r) in rho_trace.iter().enumerate() {
            trace.push(vec![job.0.into(), (e + 1).into(), (*r).into()]);
        }
        rho.absorb(&rho_trace);
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E4,
        grid,
        &["habituation", "agent", "alpha"],
        &["kl_knn", "action_variance", "mean_payoff", "mean_alpha", "rho_w"],
    );
    out.extra.push(("trace", trace));
    let final_rho = out.grid.aggregate(&["habituation"], &["rho_w"]).pop().and_then(|a| a.mean);
    out.derived.insert("final_rho_w_mean".into(), super::json_opt(final_rho));
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
