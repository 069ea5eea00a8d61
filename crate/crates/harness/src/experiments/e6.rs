//! Dynamic sentinel against fixed receptivities on a multi-phase opponent.

use brg_core::analysis::metrics::detection_time;
use brg_core::analysis::stats::{mean, wilcoxon_signed_rank};
use brg_core::body::develop_body;
use brg_core::game::PhaseKind;
use brg_core::sim::{run_simulation, SimOptions};
use serde_json::json;

use super::{column_means, json_opt, sim_seed, Contender, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::config::defection_block;
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "agent",
    "alpha",
    "cumulative_payoff",
    "detection_time",
    "min_alpha",
    "mean_discomfort_defect",
    "mean_discomfort_noisy",
];

pub const TRACE_COLUMNS: &[&str] = &["t", "phase", "mean_alpha", "mean_action", "mean_discomfort", "mean_tft_action"];

struct Run {
    cumulative: f64,
    alphas: Vec<f64>,
    actions: Vec<f64>,
    discomfort: Vec<f64>,
}

fn phase_name(kind: PhaseKind) -> &'static str {
    match kind {
        PhaseKind::Cooperate => "coop",
        PhaseKind::Defect => "defect",
        PhaseKind::Noisy(_) => "noisy",
    }
}

fn phase_mean(xs: &[f64], mask: &[bool]) -> Option<f64> {
    let sel: Vec<f64> = xs.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect();
    (!sel.is_empty()).then(|| mean(&sel))
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let schedule = &cfg.e6.schedule;
    let (onset, _) = defection_block(schedule).expect("validated");
    let mut agents = vec![Contender::sentinel(cfg)];
    agents.extend(cfg.e6.static_alphas.iter().map(|&a| Contender::fixed(a)));
    let phases: Vec<PhaseKind> = (0..schedule.len()).map(|t| schedule.phase_at(t).expect("in range").kind).collect();
    let defect_mask: Vec<bool> = phases.iter().map(|k| *k == PhaseKind::Defect).collect();
    let noisy_mask: Vec<bool> = phases.iter().map(|k| matches!(k, PhaseKind::Noisy(_))).collect();

    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E6, 0, job.0);
        let body = develop_body(&cfg.body, seed)?;
        let mut runs = Vec::with_capacity(agents.len());
        for c in &agents {
            let tr = run_simulation(&body, &c.agent, schedule, &cfg.payoff, &SimOptions::default(), sim_seed(seed, SimRole::Measure))?;
            runs.push(Run {
                cumulative: tr.cumulative_payoff(),
                alphas: tr.alphas(),
                actions: tr.actions(),
                discomfort: tr.records.iter().map(|r| r.discomfort.total).collect(),
            });
        }
        Ok((runs, RhoExtent::of(&body.rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (runs, r)) in &results {
        for (c, run) in agents.iter().zip(runs) {
            let detection =
                (c.kind == "sentinel").then(|| detection_time(&run.alphas, onset, cfg.measurement.detection_threshold)).flatten();
            grid.push(vec![
                "E6".into(),
                job.0.into(),
                c.kind.into(),
                c.alpha.into(),
                run.cumulative.into(),
                detection.into(),
                run.alphas.iter().copied().fold(f64::INFINITY, f64::min).into(),
                phase_mean(&run.discomfort, &defect_mask).into(),
                phase_mean(&run.discomfort, &noisy_mask).into(),
            ]);
        }
        rho = rho.merge(*r);
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E6,
        grid,
        &["agent", "alpha"],
        &["cumulative_payoff", "detection_time", "min_alpha", "mean_discomfort_defect", "mean_discomfort_noisy"],
    );

    let tft = agents.iter().position(|c| c.alpha == Some(0.0));
    if !results.is_empty() {
        let col = |i: usize, f: &dyn Fn(&Run) -> Vec<f64>| {
            column_means(&results.iter().map(|(_, (runs, _))| f(&runs[i])).collect::<Vec<_>>())
        };
        let (al, ac, di) = (col(0, &|r| r.alphas.clone()), col(0, &|r| r.actions.clone()), col(0, &|r| r.discomfort.clone()));
        let tft_actions = tft.map(|i| col(i, &|r| r.actions.clone()));
        let mut trace = CsvTable::new(TRACE_COLUMNS);
        for t in 0..al.len() {
            trace.push(vec![
                t.into(),
                phase_name(phases[t]).into(),
                al[t].into(),
                ac[t].into(),
                di[t].into(),
                tft_actions.as_ref().map(|a| a[t]).into(),
            ]);
        }
        out.extra.push(("trace", trace));

        let payoffs = |i: usize| -> Vec<f64> { results.iter().map(|(_, (runs, _))| runs[i].cumulative).collect() };
        let mut means = serde_json::Map::new();
        for (i, c) in agents.iter().enumerate() {
            means.insert(c.label(), mean(&payoffs(i)).into());
        }
        out.derived.insert("mean_cumulative_payoff".into(), means.into());
        if let Some(i) = tft {
            let w = wilcoxon_signed_rank(&payoffs(0), &payoffs(i));
            out.derived.insert(
                "wilcoxon_sentinel_vs_tft".into(),
                w.map_or(serde_json::Value::Null, |w| {
                    json!({ "n": w.n, "w_plus": w.w_plus, "w_minus": w.w_minus, "statistic": w.statistic, "p_value": w.p_value })
                }),
            );
        }
        // Sensitivity of noisy-phase discomfort to receptivity, by finite
        // differences across the static agents.
        let mut slope = Vec::new();
        let statics: Vec<(f64, f64)> = agents
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                let a = c.alpha.filter(|_| c.kind == "static")?;
                let ds: Vec<f64> =
                    results.iter().filter_map(|(_, (runs, _))| phase_mean(&runs[i].discomfort, &noisy_mask)).collect();
                Some((a, mean(&ds)))
            })
            .collect();
        for w in statics.windows(2) {
            if w[1].0 != w[0].0 {
                slope.push(json!({ "alpha_mid": 0.5 * (w[0].0 + w[1].0), "dD_dalpha": (w[1].1 - w[0].1) / (w[1].0 - w[0].0) }));
            }
        }
        out.derived.insert("noisy_discomfort_slope".into(), slope.into());
        let det: Vec<f64> = results
            .iter()
            .filter_map(|(_, (runs, _))| detection_time(&runs[0].alphas, onset, cfg.measurement.detection_threshold))
            .map(|d| d as f64)
            .collect();
        out.derived.insert("detection_time_mean".into(), json_opt((det.len() == results.len()).then(|| mean(&det))));
    }
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
