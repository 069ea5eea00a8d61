//! Variance reduction and the free-energy optimum as the reservoir grows.

use brg_core::analysis::fixed_point::{solve_fixed_point, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use brg_core::analysis::metrics::{argmin_free_energy, FreeEnergyPoint};
use brg_core::analysis::stats::{geometric_mean, mean};
use brg_core::body::develop_body;
use brg_core::sim::AgentSpec;
use serde_json::json;

use super::{baseline_sample, measure, position, sim_seed, DimJob, ExperimentId, ExperimentOutput, RhoExtent, RunContext, SimRole};
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "d",
    "alpha",
    "kl_knn",
    "action_variance",
    "mean_payoff",
    "ridge_lambda",
    "w_out_norm_sq",
    "fp_iterations",
];

pub const RIDGE_COLUMNS: &[&str] =
    &["experiment", "seed", "d", "ridge", "ridge_lambda", "var_alpha0", "var_alpha1", "variance_ratio", "w_out_norm_sq"];

struct DimResult {
    cells: Vec<(f64, f64, f64)>,
    ridge_lambda: f64,
    w_out_norm_sq: f64,
    fp_iterations: usize,
    /// (ridge label, lambda, var0, var1, |w_out|^2) for both penalties.
    ridge: Vec<(&'static str, f64, f64, f64, f64)>,
    rho: RhoExtent,
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let p = &cfg.e8;
    let alphas = &p.alphas;
    let jobs: Vec<DimJob> = p
        .dims
        .iter()
        .enumerate()
        .flat_map(|(dim_index, &dim)| ctx.seeds().into_iter().map(move |seed| DimJob { dim_index, dim, seed }))
        .collect();

    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E8, job.dim_index, job.seed);
        let spec = cfg.body_for_dim(job.dim);
        let body = develop_body(&spec, seed)?;
        let baseline = baseline_sample(&body, cfg, sim_seed(seed, SimRole::Baseline))?;
        let measure_seed = sim_seed(seed, SimRole::Measure);
        let mut cells = Vec::with_capacity(alphas.len());
        for &a in alphas {
            let m = measure(&body, &AgentSpec::static_alpha(a), Some(&baseline), cfg, measure_seed)?;
            cells.push((m.kl.expect("baseline given").estimate, m.variance, m.mean_payoff));
        }
        let fp = solve_fixed_point(&body.params, &body.readout, 1.0, &body.state, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
        let w_out_norm_sq = body.readout.w_out.norm_squared();
        let mut rho = RhoExtent::of(&body.rho_trace);

        let var = |b: &brg_core::body::Body, a: f64| -> brg_core::Result<f64> {
            Ok(measure(b, &AgentSpec::static_alpha(a), None, cfg, measure_seed)?.variance)
        };
        let mut ridge = vec![("scaled", spec.training.ridge_lambda, var(&body, 0.0)?, var(&body, 1.0)?, w_out_norm_sq)];
        let fixed_lambda = cfg.body.training.ridge_lambda;
        if fixed_lambda == spec.training.ridge_lambda {
            let (_, l, v0, v1, w) = ridge[0];
            ridge.push(("fixed", l, v0, v1, w));
        } else {
            let mut fixed = spec.clone();
            fixed.training.ridge_lambda = fixed_lambda;
            let fb = develop_body(&fixed, seed)?;
            rho.absorb(&fb.rho_trace);
            ridge.push(("fixed", fixed_lambda, var(&fb, 0.0)?, var(&fb, 1.0)?, fb.readout.w_out.norm_squared()));
        }
        Ok(DimResult { cells, ridge_lambda: spec.training.ridge_lambda, w_out_norm_sq, fp_iterations: fp.iterations, ridge, rho })
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut ridge_table = CsvTable::new(RIDGE_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, r) in &results {
        for (&a, &(kl, var, pay)) in alphas.iter().zip(&r.cells) {
            grid.push(vec![
                "E8".into(),
                job.seed.into(),
                job.dim.into(),
                a.into(),
                kl.into(),
                var.into(),
                pay.into(),
                r.ridge_lambda.into(),
                r.w_out_norm_sq.into(),
                r.fp_iterations.into(),
            ]);
        }
        for &(label, lambda, v0, v1, w) in &r.ridge {
            ridge_table.push(vec![
                "E8".into(),
                job.seed.into(),
                job.dim.into(),
                label.into(),
                lambda.into(),
                v0.into(),
                v1.into(),
                (if v1 > 0.0 { Some(v0 / v1) } else { None }).into(),
                w.into(),
            ]);
        }
        rho = rho.merge(r.rho);
    }

    let mut per_dim = Vec::new();
    let (i0, i1) = (position(alphas, 0.0), position(alphas, 1.0));
    for &d in &p.dims {
        let rs: Vec<&DimResult> = results.iter().filter(|(j, _)| j.dim == d).map(|(_, r)| r).collect();
        if rs.is_empty() {
            continue;
        }
        let ratio = match (i0, i1) {
            (Some(i0), Some(i1)) => {
                let ratios: Vec<f64> =
                    rs.iter().filter(|r| r.cells[i1].1 > 0.0).map(|r| r.cells[i0].1 / r.cells[i1].1).collect();
                Some(geometric_mean(&ratios))
            }
            _ => None,
        };
        let points: Vec<FreeEnergyPoint> = alphas
            .iter()
            .enumerate()
            .map(|(ai, &a)| {
                let pay = mean(&rs.iter().map(|r| r.cells[ai].2).collect::<Vec<_>>());
                let kl = mean(&rs.iter().map(|r| r.cells[ai].0).collect::<Vec<_>>());
                FreeEnergyPoint::new(a, pay, kl, p.lambda)
            })
            .collect();
        let fixed_ratios: Vec<f64> =
            rs.iter().filter(|r| r.ridge[1].3 > 0.0).map(|r| r.ridge[1].2 / r.ridge[1].3).collect();
        per_dim.push(json!({
            "d": d,
            "variance_ratio_geomean": ratio.filter(|x| x.is_finite()),
            "variance_ratio_geomean_fixed_ridge": Some(geometric_mean(&fixed_ratios)).filter(|x| x.is_finite()),
            "free_energy_argmin_alpha": argmin_free_energy(&points).map(|p| p.alpha),
            "fp_iterations_mean": mean(&rs.iter().map(|r| r.fp_iterations as f64).collect::<Vec<_>>()),
        }));
    }

    let mut out = ExperimentOutput::new(
        ExperimentId::E8,
        grid,
        &["d", "alpha"],
        &["kl_knn", "action_variance", "mean_payoff", "w_out_norm_sq", "fp_iterations"],
    );
    out.extra.push(("ridge", ridge_table));
    out.derived.insert("lambda".into(), p.lambda.into());
    out.derived.insert("per_dimension".into(), per_dim.into());
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
