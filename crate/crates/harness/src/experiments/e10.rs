//! Exponential smoothing of Tit-for-Tat as a variance-reduction baseline
//! against the reservoir body.

use brg_core::analysis::metrics::{pre_perturbation_reference, recovery_time};
use brg_core::analysis::stats::{geometric_mean, mean};
use brg_core::body::develop_body;
use brg_core::game::CognitiveKind;
use brg_core::sim::{run_simulation, AgentSpec, SimOptions};
use serde_json::json;

use super::{measure, sim_seed, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::config::defection_block;
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "agent",
    "gamma",
    "action_variance",
    "mean_payoff",
    "variance_ratio",
    "depth",
    "recovery_time",
];

struct AgentResult {
    variance: f64,
    payoff: f64,
    /// Lowest action during the defection block.
    depth: f64,
    recovery: Option<usize>,
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let m = &cfg.measurement;
    let p = &cfg.e10;
    let (onset, end) = defection_block(&p.perturbation).expect("validated");

    let mut agents: Vec<(&'static str, Option<f64>, AgentSpec)> = p
        .gammas
        .iter()
        .map(|&g| ("ema", Some(g), AgentSpec::static_alpha(0.0).with_cognitive(CognitiveKind::EmaTft { gamma: g })))
        .collect();
    agents.push(("reservoir", None, AgentSpec::static_alpha(1.0)));

    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E10, 0, job.0);
        let body = develop_body(&cfg.body, seed)?;
        let s = sim_seed(seed, SimRole::Measure);
        let raw = measure(&body, &AgentSpec::static_alpha(0.0), None, cfg, s)?.variance;
        let mut out = Vec::with_capacity(agents.len());
        for (_, _, agent) in &agents {
            let noisy = measure(&body, agent, None, cfg, s)?;
            let tr = run_simulation(&body, agent, &p.perturbation, &cfg.payoff, &SimOptions::default(), s)?;
            let actions = tr.actions();
            let reference = pre_perturbation_reference(&actions, onset, m.reference_window);
            let depth = actions[onset..end].iter().copied().fold(f64::INFINITY, f64::min);
            out.push(AgentResult {
                variance: noisy.variance,
                payoff: noisy.mean_payoff,
                depth,
                recovery: reference.and_then(|r| recovery_time(&actions, end, r, m.recovery_fraction, m.recovery_sustain)),
            });
        }
        Ok((raw, out, RhoExtent::of(&body.rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (raw, rs, r)) in &results {
        for ((kind, gamma, _), a) in agents.iter().zip(rs) {
            let ratio = (a.variance > 0.0).then(|| raw / a.variance);
            grid.push(vec![
                "E10".into(),
                job.0.into(),
                (*kind).into(),
                (*gamma).into(),
                a.variance.into(),
                a.payoff.into(),
                ratio.into(),
                a.depth.into(),
                a.recovery.into(),
            ]);
        }
        rho = rho.merge(*r);
    }

    let mut table = Vec::new();
    for (i, (kind, gamma, _)) in agents.iter().enumerate() {
        let ratios: Vec<f64> = results
            .iter()
            .filter(|(_, (_, rs, _))| rs[i].variance > 0.0)
            .map(|(_, (raw, rs, _))| raw / rs[i].variance)
            .collect();
        let depth: Vec<f64> = results.iter().map(|(_, (_, rs, _))| rs[i].depth).collect();
        let rec: Vec<f64> = results.iter().filter_map(|(_, (_, rs, _))| rs[i].recovery.map(|r| r as f64)).collect();
        table.push(json!({
            "agent": kind,
            "gamma": gamma,
            "variance_ratio_geomean": Some(geometric_mean(&ratios)).filter(|x| x.is_finite()),
            "depth_mean": (!depth.is_empty()).then(|| mean(&depth)),
            "recovery_mean": (!rec.is_empty()).then(|| mean(&rec)),
            "recovered_seeds": rec.len(),
        }));
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E10,
        grid,
        &["agent", "gamma"],
        &["action_variance", "mean_payoff", "variance_ratio", "depth", "recovery_time"],
    );
    out.derived.insert("comparison".into(), table.into());
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
