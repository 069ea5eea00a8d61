//! KL cost, action variance and payoff over a grid of fixed receptivities
//! against the noisy cooperative opponent.

use brg_core::analysis::kl::kl_gaussian;
use brg_core::analysis::stats::mean;
use brg_core::body::develop_body;
use brg_core::sim::AgentSpec;
use serde_json::{json, Value};

use super::{
    argmin, baseline_sample, column_means, json_opt, measure, position, ratio_geomean, sim_seed, ExperimentId,
    ExperimentOutput, RhoExtent, RunContext, SeedJob, SimRole,
};
use crate::error::Result;
use crate::output::CsvTable;

pub const GRID_COLUMNS: &[&str] = &["experiment", "seed", "alpha", "kl_knn", "action_variance", "mean_payoff"];
pub const DIAGNOSTIC_COLUMNS: &[&str] =
    &["experiment", "seed", "alpha", "kl_knn_raw", "kl_jittered", "kl_gaussian", "mean_alpha"];

struct Point {
    kl: f64,
    kl_raw: f64,
    jittered: bool,
    kl_gaussian: Option<f64>,
    variance: f64,
    payoff: f64,
    mean_alpha: f64,
}

pub(super) fn run(ctx: &RunContext) -> Result<ExperimentOutput> {
    let cfg = &ctx.config;
    let alphas = &cfg.e2.alphas;
    let jobs: Vec<SeedJob> = ctx.seeds().into_iter().map(SeedJob).collect();
    let (results, failures) = ctx.run_jobs(jobs, |job| {
        let seed = ctx.body_seed(ExperimentId::E2, 0, job.0);
        let body = develop_body(&cfg.body, seed)?;
        let baseline = baseline_sample(&body, cfg, sim_seed(seed, SimRole::Baseline))?;
        let mut points = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let m = measure(&body, &AgentSpec::static_alpha(alpha), Some(&baseline), cfg, sim_seed(seed, SimRole::Measure))?;
            let kl = m.kl.expect("baseline given");
            points.push(Point {
                kl: kl.estimate,
                kl_raw: kl.raw,
                jittered: kl.jittered,
                kl_gaussian: kl_gaussian(&m.states, &baseline).ok(),
                variance: m.variance,
                payoff: m.mean_payoff,
                mean_alpha: m.mean_alpha,
            });
        }
        Ok((points, RhoExtent::of(&body.rho_trace)))
    })?;

    let mut grid = CsvTable::new(GRID_COLUMNS);
    let mut diag = CsvTable::new(DIAGNOSTIC_COLUMNS);
    let mut rho = RhoExtent::default();
    for (job, (points, r)) in &results {
        for (&alpha, p) in alphas.iter().zip(points) {
            grid.push(vec!["E2".into(), job.0.into(), alpha.into(), p.kl.into(), p.variance.into(), p.payoff.into()]);
            diag.push(vec![
                "E2".into(),
                job.0.into(),
                alpha.into(),
                p.kl_raw.into(),
                p.jittered.into(),
                p.kl_gaussian.into(),
                p.mean_alpha.into(),
            ]);
        }
        rho = rho.merge(*r);
    }

    let mut out = ExperimentOutput::new(ExperimentId::E2, grid, &["alpha"], &["kl_knn", "action_variance", "mean_payoff"]);
    out.extra.push(("diagnostics", diag));

    let pick = |f: &dyn Fn(&Point) -> f64| -> Vec<Vec<f64>> {
        results.iter().map(|(_, (pts, _))| pts.iter().map(f).collect()).collect()
    };
    let kl_means = column_means(&pick(&|p| p.kl));
    out.derived.insert("kl_argmin_alpha".into(), json_opt(argmin(&kl_means).map(|i| alphas[i])));
    out.derived.insert("kl_seed_mean".into(), json!(kl_means));

    if let (Some(i0), Some(i1), false) = (position(alphas, 0.0), position(alphas, 1.0), results.is_empty()) {
        let var0: Vec<f64> = results.iter().map(|(_, (p, _))| p[i0].variance).collect();
        let var1: Vec<f64> = results.iter().map(|(_, (p, _))| p[i1].variance).collect();
        let (ratios, g) = ratio_geomean(&var0, &var1);
        out.derived.insert("var_alpha0_mean".into(), json_opt(Some(mean(&var0))));
        out.derived.insert("var_alpha1_mean".into(), json_opt(Some(mean(&var1))));
        out.derived.insert("variance_ratio_per_seed".into(), json!(ratios));
        out.derived.insert("variance_ratio_geomean".into(), json_opt(Some(g)));
        let gauss = |i: usize| -> Value {
            let xs: Vec<f64> = results.iter().filter_map(|(_, (p, _))| p[i].kl_gaussian).collect();
            json_opt((xs.len() == results.len()).then(|| mean(&xs)))
        };
        out.derived.insert("kl_gaussian_alpha0_mean".into(), gauss(i0));
        out.derived.insert("kl_gaussian_alpha1_mean".into(), gauss(i1));
        out.derived.insert("kl_knn_alpha0_mean".into(), json_opt(Some(kl_means[i0])));
        out.derived.insert("kl_knn_alpha1_mean".into(), json_opt(Some(kl_means[i1])));
    }
    rho.record(&mut out.derived);
    out.failures = failures;
    Ok(out)
}
