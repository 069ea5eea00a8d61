//! Sentinel against Tit-for-Tat over reservoir dimension and defection
//! block length.

use brg_core::analysis::metrics::{detection_time, pre_perturbation_reference, recovery_time};
use brg_core::analysis::stats::mean;
use brg_core::body::develop_body;
use brg_core::game::{OpponentSchedule, Phase, PhaseKind};
use brg_core::sim::{run_simulation, AgentSpec, SimOptions};
use serde_json::json;

use super::{sim_seed, DimJob, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SimRole};
use crate::error::Result;
use crate::output::{CsvTable, Row};

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "d",
    "block_length",
    "detection_time",
    "min_alpha",
    "payoff_sentinel",
    "payoff_tft",
    "payoff_advantage",
    "recovery_time",
];

pub fn block_schedule(lead: usize, block: usize, tail: usize) -> brg_core::Result<OpponentSchedule> {
    OpponentSchedule::new(vec![
        Phase { kind: PhaseKind::Cooperate, length: lead },
        Phase { kind: PhaseKind::Defect, length: block },
        Phase { kind: PhaseKind::Cooperate, length: tail },
    ])
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let p = &cfg.e9;
    let m = &cfg.measurement;
    let jobs: Vec<DimJob> = p
        .dims
        .iter()
        .enumerate()
        .flat_map(|(dim_index, &dim)| ctx.seeds().into_iter().map(move |seed| DimJob { dim_index, dim, seed }))
        .collect();

    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E9, job.dim_index, job.seed);
        let body = develop_body(&cfg.body_for_dim(job.dim), seed)?;
        let sentinel = AgentSpec::sentinel(cfg.sentinel.clone());
        let tft = AgentSpec::static_alpha(0.0);
        let mut rows: Vec<Row> = Vec::new();
        for &block in &p.block_lengths {
            let schedule = block_schedule(p.lead, block, p.tail)?;
            let s = sim_seed(seed, SimRole::Measure);
            let ts = run_simulation(&body, &sentinel, &schedule, &cfg.payoff, &SimOptions::default(), s)?;
            let tt = run_simulation(&body, &tft, &schedule, &cfg.payoff, &SimOptions::default(), s)?;
            let alphas = ts.alphas();
            let actions = ts.actions();
            let end = p.lead + block;
            let recovery = pre_perturbation_reference(&actions, p.lead, m.reference_window)
                .and_then(|r| recovery_time(&actions, end, r, m.recovery_fraction, m.recovery_sustain));
            let (ps, pt) = (ts.cumulative_payoff(), tt.cumulative_payoff());
            rows.push(vec![
                "E9".into(),
                job.seed.into(),
                job.dim.into(),
                block.into(),
                detection_time(&alphas, p.lead, m.detection_threshold).into(),
                alphas.iter().copied().fold(f64::INFINITY, f64::min).into(),
                ps.into(),
                pt.into(),
                (ps - pt).into(),
                recovery.into(),
            ]);
        }
        Ok((rows, RhoExtent::of(&body.rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (_, (rows, r)) in results {
        rows.into_iter().for_each(|row| grid.push(row));
        rho = rho.merge(r);
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E9,
        grid,
        &["d", "block_length"],
        &["detection_time", "min_alpha", "payoff_sentinel", "payoff_tft", "payoff_advantage", "recovery_time"],
    );
    // Spread of seed-mean detection time across block lengths, per dimension.
    let agg = out.grid.aggregate(&["d", "block_length"], &["detection_time"]);
    let mut spread = Vec::new();
    for &d in &p.dims {
        let ms: Vec<f64> = agg.iter().filter(|a| a.key["d"] == json!(d)).filter_map(|a| a.mean).collect();
        if !ms.is_empty() {
            let lo = ms.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            spread.push(json!({ "d": d, "detection_spread": hi - lo, "detection_mean": mean(&ms) }));
        }
    }
    out.derived.insert("detection_by_dimension".into(), spread.into());
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
