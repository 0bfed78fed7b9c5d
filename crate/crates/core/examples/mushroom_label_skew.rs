//! Logistic regression on the bundled mushroom-style table: categorical
//! attributes are one-hot encoded and 8 clients hold edible-only (4),
//! poisonous-only (3) or mixed (1) rows with uniformly drawn shares.

use std::ops::ControlFlow;

use fedhybrid::data::{load_csv, partition_label_skew_weighted, uniform_sizes, CsvOptions, SkewPlan};
use fedhybrid::hybrid::{kinds_first_newton, run_with, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::MetricsEngine;
use fedhybrid::model::ProblemInstance;

fn main() -> fedhybrid::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/mushroom.csv");
    let ds = load_csv(
        path,
        &CsvOptions::classification("class").normalize(true).intercept(true),
    )?;
    let n = 8;
    let weights: Vec<f64> = uniform_sizes(ds.len(), n, 1)?.into_iter().map(|s| s as f64).collect();
    let part = partition_label_skew_weighted(&ds, &SkewPlan::from_counts(4, 3, 1), &weights)?;
    let problem = ProblemInstance::logistic_regression(&ds, &part, 0.1, 0.1)?;
    let engine = MetricsEngine::new(&problem)?;
    println!("{} rows, d = {}, client sizes {:?}", ds.len(), ds.dim(), part.sizes());
    println!("f* = {:.6}", engine.certificate().f_star);

    println!("{:>6} {:>8} {:>12} {:>12}", "|J2|", "rounds", "fun_gap", "uplink kB");
    for newton in [0, 4, 8] {
        let plan = StepsizePlan::per_kind(kinds_first_newton(n, newton), (3.0, 0.03), (1.0, 0.1))?;
        let mut hit = None;
        run_with(
            &problem,
            &plan,
            &Init::zeros(n, ds.dim()),
            &RunOptions::new(2000).cadence(5),
            |s| {
                let r = engine.record(s.k, &s.primal(), &s.lambda)?;
                if r.consensus_err + r.primal_grad_norm <= 1e-6 {
                    hit = Some((r.k, r.fun_gap, s.uplink_bytes));
                    return Ok(ControlFlow::Break(()));
                }
                Ok(ControlFlow::Continue(()))
            },
        )?;
        match hit {
            Some((k, gap, up)) => println!("{newton:>6} {k:>8} {gap:>12.3e} {:>12.1}", up as f64 / 1e3),
            None => println!("{newton:>6} {:>8}", "-"),
        }
    }
    Ok(())
}
