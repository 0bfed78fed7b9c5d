//! Smallest end-to-end run: synthetic least squares, half the clients
//! Newton-type, safe stepsizes, metrics every 100 rounds.

use std::ops::ControlFlow;

use fedhybrid::data::gen_linreg_synthetic;
use fedhybrid::hybrid::{kinds_first_newton, rate_rho, run_with, safe_stepsizes, Init, RunOptions};
use fedhybrid::metrics::MetricsEngine;
use fedhybrid::model::ProblemInstance;
use fedhybrid::Vector;

fn row(v: &Vector) -> String {
    v.iter().map(|x| format!("{x:8.4}")).collect::<Vec<_>>().join(" ")
}

fn main() -> fedhybrid::Result<()> {
    let (n, d, mu) = (10, 5, 9.0);
    let (ds, part, _truth) = gen_linreg_synthetic(n, d, 1)?;
    let problem = ProblemInstance::ridge_regression(&ds, &part, 0.1, mu)?;
    let curv = problem.curvatures()?;

    let plan = safe_stepsizes(&curv, mu, &kinds_first_newton(n, n / 2))?;
    let rates = rate_rho(&plan, &curv, mu)?;
    println!("clients {n}, dim {d}, samples {:?}", part.sizes());
    println!("safe stepsizes: a = {:?}", plan.a);
    println!("theoretical rate rho = {:.3e}", rates.rho);

    let engine = MetricsEngine::new(&problem)?;
    println!("f* = {:.6}", engine.certificate().f_star);
    println!("{:>6} {:>12} {:>12} {:>12}", "k", "delta", "consensus", "fun_gap");
    let opts = RunOptions::new(1000).cadence(100);
    let last = run_with(&problem, &plan, &Init::zeros(n, d), &opts, |s| {
        let r = engine.record(s.k, &s.primal(), &s.lambda)?;
        println!(
            "{:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.k,
            r.delta.unwrap_or(f64::NAN),
            r.consensus_err,
            r.fun_gap
        );
        Ok(ControlFlow::Continue(()))
    })?;
    println!("server model after {} rounds: {}", last.k, row(&last.x0));
    println!("centralized optimum:          {}", row(&engine.certificate().omega));
    Ok(())
}
