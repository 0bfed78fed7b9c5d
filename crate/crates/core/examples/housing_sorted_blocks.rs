//! Ridge regression on the bundled housing-style table, rows sorted by the
//! target and cut into blocks of uniformly drawn sizes. Compares all-gradient,
//! hybrid and all-Newton clients with grid-searched stepsizes.

use std::ops::ControlFlow;

use fedhybrid::data::{load_csv, partition_sorted_blocks, uniform_sizes, CsvOptions};
use fedhybrid::hybrid::{kinds_first_newton, run_with, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::MetricsEngine;
use fedhybrid::model::ProblemInstance;

fn main() -> fedhybrid::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/housing.csv");
    let ds = load_csv(path, &CsvOptions::regression("medv").normalize(true).intercept(true))?;
    let n = 20;
    let sizes = uniform_sizes(ds.len(), n, 1)?;
    let part = partition_sorted_blocks(&ds, &sizes)?;
    let problem = ProblemInstance::ridge_regression(&ds, &part, 0.1, 9.0)?;
    let engine = MetricsEngine::new(&problem)?;
    println!("{} rows, d = {}, client sizes {:?}", ds.len(), ds.dim(), sizes);

    println!("{:>6} {:>8} {:>12} {:>12}", "|J2|", "iters", "fun_gap", "consensus");
    for newton in [0, 10, 20] {
        let plan = StepsizePlan::per_kind(kinds_first_newton(n, newton), (0.03, 1.0), (1.0, 0.1))?;
        let opts = RunOptions::new(5000);
        let mut hit = None;
        run_with(&problem, &plan, &Init::zeros(n, ds.dim()), &opts, |s| {
            let r = engine.record(s.k, &s.primal(), &s.lambda)?;
            if r.consensus_err + r.primal_grad_norm <= 1e-6 {
                hit = Some(r);
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        })?;
        match hit {
            Some(r) => println!("{newton:>6} {:>8} {:>12.3e} {:>12.3e}", r.k, r.fun_gap, r.consensus_err),
            None => println!("{newton:>6} {:>8}", "-"),
        }
    }
    Ok(())
}
