//! Response of several agents to a block of unconditional defection.

use brg_core::analysis::metrics::{detection_time, pre_perturbation_reference, recovery_time};
use brg_core::body::develop_body;
use brg_core::sim::{run_simulation, SimOptions};

use super::{column_means, sim_seed, Contender, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::config::defection_block;
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "agent",
    "alpha",
    "cumulative_payoff",
    "mean_action_block",
    "min_action_block",
    "recovery_time",
    "detection_time",
    "min_alpha",
];

pub const TRACE_COLUMNS: &[&str] = &["t", "agent", "alpha", "mean_action", "mean_alpha", "mean_opponent"];

struct Run {
    actions: Vec<f64>,
    alphas: Vec<f64>,
    opponent: Vec<f64>,
    cumulative: f64,
}

pub(super) fn contenders(ctx: &RunContext) -> Vec<Contender> {
    let p = &ctx.config.e3;
    let mut out: Vec<Contender> = p.static_alphas.iter().map(|&a| Contender::fixed(a)).collect();
    if p.include_sentinel {
        out.push(Contender::sentinel(&ctx.config));
    }
    if p.include_allc {
        out.push(Contender::all_cooperate());
    }
    out
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let m = &cfg.measurement;
    let schedule = &cfg.e3.schedule;
    let (onset, end) = defection_block(schedule).expect("validated");
    let agents = contenders(ctx);

    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E3, 0, job.0);
        let body = develop_body(&cfg.body, seed)?;
        let mut runs = Vec::with_capacity(agents.len());
        for c in &agents {
            let tr = run_simulation(&body, &c.agent, schedule, &cfg.payoff, &SimOptions::default(), sim_seed(seed, SimRole::Measure))?;
            runs.push(Run {
                actions: tr.actions(),
                alphas: tr.alphas(),
                opponent: tr.records.iter().map(|r| r.a_opp).collect(),
                cumulative: tr.cumulative_payoff(),
            });
        }
        Ok((runs, RhoExtent::of(&body.rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (runs, r)) in &results {
        for (c, run) in agents.iter().zip(runs) {
            let block = &run.actions[onset..end];
            let reference = pre_perturbation_reference(&run.actions, onset, m.reference_window);
            let recovery =
                reference.and_then(|re| recovery_time(&run.actions, end, re, m.recovery_fraction, m.recovery_sustain));
            let detection = (c.kind == "sentinel").then(|| detection_time(&run.alphas, onset, m.detection_threshold)).flatten();
            grid.push(vec![
                "E3".into(),
                job.0.into(),
                c.kind.into(),
                c.alpha.into(),
                run.cumulative.into(),
                (block.iter().sum::<f64>() / block.len() as f64).into(),
                block.iter().copied().fold(f64::INFINITY, f64::min).into(),
                recovery.into(),
                detection.into(),
                run.alphas.iter().copied().fold(f64::INFINITY, f64::min).into(),
            ]);
        }
        rho = rho.merge(*r);
    }

    let mut trace = CsvTable::new(TRACE_COLUMNS);
    for (i, c) in agents.iter().enumerate() {
        let col = |f: &dyn Fn(&Run) -> Vec<f64>| column_means(&results.iter().map(|(_, (runs, _))| f(&runs[i])).collect::<Vec<_>>());
        let (a, al, o) = (col(&|r| r.actions.clone()), col(&|r| r.alphas.clone()), col(&|r| r.opponent.clone()));
        for t in 0..a.len() {
            trace.push(vec![t.into(), c.kind.into(), c.alpha.into(), a[t].into(), al[t].into(), o[t].into()]);
        }
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E3,
        grid,
        &["agent", "alpha"],
        &["cumulative_payoff", "mean_action_block", "min_action_block", "recovery_time", "detection_time", "min_alpha"],
    );
    out.extra.push(("trace", trace));
    out.derived.insert("defection_onset".into(), onset.into());
    out.derived.insert("defection_end".into(), end.into());
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
