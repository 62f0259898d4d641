use arw_core::experiments::{
    run_abelian_check, run_ball, run_dd_chain, run_ejector_check, run_estimate_rho_star, run_exit_fraction,
    run_hockey, run_inner_bound, run_monotonicity_check, run_nml_enlargement, run_sample_sn, run_superadd_dominance,
    DominanceRow, ExperimentKind, ExperimentPlan, InitialCondition, ALPHA,
};
use arw_core::stats::MeanCi;
use arw_core::tape::{derive_replica_seed, Stream};
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::output::Report;
use crate::CliError;

/// Report plus the verdict of the command's built-in check, if it has one.
pub struct Outcome {
    pub report: Report,
    pub check: Option<bool>,
}

const SAMPLE_COLUMNS: [&str; 2] = ["replica_index", "value"];
const SUMMARY_COLUMNS: [&str; 5] = ["n_or_k", "mean", "ci_lo", "ci_hi", "n_samples"];
const DOMINANCE_COLUMNS: [&str; 5] = ["n", "m", "max_gap", "band", "verdict"];

fn ci_result(report: &mut Report, key: &str, ci: &MeanCi) {
    report.result(format!("{key}.mean"), ci.mean);
    report.result(format!("{key}.ci_lo"), ci.ci_lo);
    report.result(format!("{key}.ci_hi"), ci.ci_hi);
}

fn dominance_row(report: &mut Report, row: &DominanceRow) {
    report.row(vec![
        json!(row.n),
        json!(row.m),
        json!(row.test.max_gap),
        json!(row.test.band),
        json!(row.test.verdict.to_string()),
    ]);
}

fn initial_condition(cfg: &RunConfig) -> InitialCondition {
    if cfg.density >= 1.0 {
        InitialCondition::AllActive
    } else {
        InitialCondition::Bernoulli(cfg.density)
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let plan = ExperimentPlan::new(cfg.params()?, cfg.replicas, cfg.seed).with_fuel(cfg.fuel);
    let mut check = None;
    let report = match cfg.command {
        Command::SampleSn => {
            let s = run_sample_sn(&plan, cfg.n)?;
            let mut r = Report::new(&SAMPLE_COLUMNS);
            r.result("mean", s.dist().mean());
            r.result("fuel_exhausted", s.fuel_exhausted());
            for (i, v) in s.indexed() {
                r.row(vec![json!(i), json!(v)]);
            }
            r
        }
        Command::DdRun => {
            let ys = run_dd_chain(&plan, cfg.n, cfg.steps)?;
            let mut r = Report::new(&["t", "value"]);
            for (t, y) in ys.iter().enumerate() {
                r.row(vec![json!(t), json!(y)]);
            }
            r
        }
        Command::Hockey => {
            let c = run_hockey(&plan, cfg.n, &cfg.rho_grid.0)?;
            let mut r = Report::new(&["rho", "mean", "ci_lo", "ci_hi", "n_samples"]);
            r.result("fuel_exhausted", c.fuel_exhausted);
            for (rho, ci) in &c.points {
                r.row(vec![json!(rho), json!(ci.mean), json!(ci.ci_lo), json!(ci.ci_hi), json!(ci.n_samples)]);
            }
            r
        }
        Command::Ball => {
            let b = run_ball(&plan, cfg.k)?;
            let mut r = Report::new(&SAMPLE_COLUMNS);
            ci_result(&mut r, "density", &b.density());
            ci_result(&mut r, "center_of_mass", &b.center_of_mass());
            r.result("fuel_exhausted", b.fuel_exhausted);
            for (i, s) in b.samples.iter().enumerate() {
                r.row(vec![json!(i), json!(s.span())]);
            }
            r
        }
        Command::Dominance => {
            let pairs: Vec<(u64, u64)> = cfg.pairs.0.iter().map(|p| (p.0, p.1)).collect();
            let rows = run_superadd_dominance(&plan, &pairs, ALPHA)?;
            let mut r = Report::new(&DOMINANCE_COLUMNS);
            for row in &rows {
                dominance_row(&mut r, row);
            }
            check = Some(rows.iter().all(|row| !row.test.verdict.rejected()));
            r
        }
        Command::MonotonicityCheck => {
            let row = run_monotonicity_check(&plan, cfg.n, cfg.x, cfg.extra, ALPHA)?;
            let mut r = Report::new(&DOMINANCE_COLUMNS);
            r.result("x", cfg.x);
            r.result("extra", cfg.extra);
            dominance_row(&mut r, &row);
            check = Some(!row.test.verdict.rejected());
            r
        }
        Command::Ejector => {
            let s = run_ejector_check(&plan, cfg.n, cfg.m)?;
            let mut r = Report::new(&["replica_index", "s_v", "s_l", "s_r", "n_1", "n_k", "depth", "base_pivot_odometer"]);
            r.result("split_identity_failures", s.split_identity_failures);
            r.result("full_identity_checked", s.full_identity_checked);
            r.result("full_identity_failures", s.full_identity_failures);
            r.result("fuel_exhausted", s.fuel_exhausted);
            for (i, e) in s.results.iter().enumerate() {
                r.row(vec![
                    json!(i),
                    json!(e.s_v),
                    json!(e.s_l),
                    json!(e.s_r),
                    json!(e.n_at(1)),
                    json!(e.n_k.last().map(|&(_, n)| n)),
                    json!(e.depth()),
                    json!(e.base_pivot_odometer),
                ]);
            }
            check = Some(s.split_identity_failures == 0 && s.full_identity_failures == 0 && s.fuel_exhausted == 0);
            r
        }
        Command::ExitFraction => {
            let e = run_exit_fraction(&plan, cfg.n, initial_condition(cfg))?;
            let mut r = Report::new(&SAMPLE_COLUMNS);
            ci_result(&mut r, "fraction", &e.mean());
            for (eps, prob) in e.exceedance(&cfg.eps_grid.0) {
                r.result(format!("exceeds.{eps}"), prob);
            }
            r.result("fuel_exhausted", e.fuel_exhausted);
            for (i, &(m, _, _)) in e.samples.iter().enumerate() {
                r.row(vec![json!(i), json!(m)]);
            }
            r
        }
        Command::NmlCheck => {
            let init_seed = Stream::InitialConfig
                .seed(derive_replica_seed(plan.stream_master(ExperimentKind::NmlEnlargement, &[cfg.n]), u64::MAX));
            let initial = initial_condition(cfg).sample(cfg.n, init_seed);
            let res = run_nml_enlargement(&plan, cfg.n, &initial, &cfg.i_grid.0, &cfg.j_grid.0, cfg.geometric.into())?;
            let mut r = Report::new(&[
                "i",
                "j",
                "containment",
                "exits_at_most_i",
                "geometric_cdf",
                "bound",
                "std_error",
                "holds",
            ]);
            r.result("particles", initial.total_particles());
            r.result("fuel_exhausted", res.fuel_exhausted);
            for row in &res.rows {
                r.row(vec![
                    json!(row.i),
                    json!(row.j),
                    json!(row.containment),
                    json!(row.exits_at_most_i),
                    json!(row.geometric_cdf),
                    json!(row.bound),
                    json!(row.std_error),
                    json!(row.holds()),
                ]);
            }
            check = Some(res.rows.iter().all(|row| row.holds()));
            r
        }
        Command::InnerBound => {
            let rows = run_inner_bound(&plan, &cfg.ns.0, &cfg.ks.0, &cfg.xs.0)?;
            let mut r = Report::new(&["n", "k", "x", "containment", "sleepers_at_least_k", "std_error", "holds"]);
            for row in &rows {
                r.row(vec![
                    json!(row.n),
                    json!(row.k),
                    json!(row.x),
                    json!(row.containment),
                    json!(row.sleepers_at_least_k),
                    json!(row.std_error),
                    json!(row.holds()),
                ]);
            }
            check = Some(rows.iter().all(|row| row.holds()));
            r
        }
        Command::AbelianCheck => {
            let s = run_abelian_check(&plan)?;
            let mut r = Report::new(&["replica_index"]);
            r.result("instances", s.instances);
            r.result("agreements", s.agreements);
            r.result("fuel_exhausted", s.fuel_exhausted);
            for &i in &s.failures {
                r.row(vec![json!(i)]);
            }
            check = Some(s.all_agree());
            r
        }
        Command::EstimateRhoc => {
            let (sets, est) = run_estimate_rho_star(&plan, &cfg.sizes.0)?;
            let mut r = Report::new(&SUMMARY_COLUMNS);
            r.result("rho_star", est.estimate);
            r.result("rho_star.ci_lo", est.ci_lo);
            r.result("rho_star.ci_hi", est.ci_hi);
            r.result("argmax_n", est.argmax_n);
            let exhausted: u64 = sets.values().map(|s| s.fuel_exhausted()).sum();
            r.result("fuel_exhausted", exhausted);
            for (&n, s) in &sets {
                let ci = s.dist().scaled_mean_ci(n as f64);
                r.row(vec![json!(n), json!(ci.mean), json!(ci.ci_lo), json!(ci.ci_hi), json!(ci.n_samples)]);
            }
            r
        }
    };
    Ok(Outcome { report, check })
}
