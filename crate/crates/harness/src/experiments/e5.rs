//! Free-energy landscape over receptivity at several habituation depths.

use brg_core::analysis::metrics::{argmin_free_energy, FreeEnergyPoint};
use brg_core::analysis::stats::mean;
use brg_core::body::{habituator, Body};
use brg_core::sim::AgentSpec;
use serde_json::json;

use super::{baseline_sample, measure, sim_seed, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole};
use crate::error::Result;
use crate::output::{CsvTable, Row};

pub const GRID_COLUMNS: &[&str] =
    &["experiment", "seed", "habituation", "alpha", "kl_knn", "action_variance", "mean_payoff"];

pub const FREE_ENERGY_COLUMNS: &[&str] =
    &["habituation", "lambda", "alpha", "mean_payoff", "mean_kl", "free_energy", "is_argmin"];

/// Free energy from seed-mean payoff and KL, with the argmin flagged per
/// (depth, lambda). `cells[h][a] = (payoffs, kls)` over seeds.
pub fn free_energy_table(
    depths: &[usize],
    alphas: &[f64],
    lambdas: &[f64],
    cells: &[Vec<(Vec<f64>, Vec<f64>)>],
) -> (CsvTable, Vec<serde_json::Value>) {
    let mut table = CsvTable::new(FREE_ENERGY_COLUMNS);
    let mut optima = Vec::new();
    for (hi, &h) in depths.iter().enumerate() {
        for &lambda in lambdas {
            let points: Vec<FreeEnergyPoint> = alphas
                .iter()
                .zip(&cells[hi])
                .map(|(&a, (pay, kl))| FreeEnergyPoint::new(a, mean(pay), mean(kl), lambda))
                .collect();
            let best = argmin_free_energy(&points).map(|p| p.alpha);
            for p in &points {
                table.push(vec![
                    h.into(),
                    lambda.into(),
                    p.alpha.into(),
                    p.mean_payoff.into(),
                    p.kl.into(),
                    p.free_energy.into(),
                    (Some(p.alpha) == best).into(),
                ]);
            }
            optima.push(json!({ "habituation": h, "lambda": lambda, "alpha": best }));
        }
    }
    (table, optima)
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let p = &cfg.e5;
    let mut depths = p.habituation.clone();
    depths.sort_unstable();
    depths.dedup();
    let alphas = &p.alphas;

    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E5, 0, job.0);
        let (mut hab, readout) = habituator(&cfg.body, seed)?;
        let mut per_depth = Vec::with_capacity(depths.len());
        for &h in &depths {
            hab.advance(h - hab.epoch())?;
            let body = Body::from_outcome(readout.clone(), hab.snapshot());
            let baseline = baseline_sample(&body, cfg, sim_seed(seed, SimRole::Baseline))?;
            let mut cells = Vec::with_capacity(alphas.len());
            for &a in alphas {
                let m = measure(&body, &AgentSpec::static_alpha(a), Some(&baseline), cfg, sim_seed(seed, SimRole::Measure))?;
                cells.push((m.kl.expect("baseline given").estimate, m.variance, m.mean_payoff));
            }
            per_depth.push(cells);
        }
        Ok((per_depth, RhoExtent::of(&hab.snapshot().rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (per_depth, r)) in &results {
        for (&h, cells) in depths.iter().zip(per_depth) {
            for (&a, &(kl, var, pay)) in alphas.iter().zip(cells) {
                let row: Row = vec!["E5".into(), job.0.into(), h.into(), a.into(), kl.into(), var.into(), pay.into()];
                grid.push(row);
            }
        }
        rho = rho.merge(*r);
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E5,
        grid,
        &["habituation", "alpha"],
        &["kl_knn", "action_variance", "mean_payoff"],
    );
    if !results.is_empty() {
        let cells: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..depths.len())
            .map(|hi| {
                (0..alphas.len())
                    .map(|ai| {
                        let pay = results.iter().map(|(_, (pd, _))| pd[hi][ai].2).collect();
                        let kl = results.iter().map(|(_, (pd, _))| pd[hi][ai].0).collect();
                        (pay, kl)
                    })
                    .collect()
            })
            .collect();
        let (table, optima) = free_energy_table(&depths, alphas, &p.lambdas, &cells);
        out.extra.push(("free_energy", table));
        out.derived.insert("free_energy_argmin".into(), optima.into());
    }
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
