//! Sweeps the number of Newton-type clients on synthetic least squares with
//! fixed tuned stepsizes and reports iterations until the combined error
//! falls below `1e-6` of its initial value.

use std::ops::ControlFlow;

use fedhybrid::data::gen_linreg_synthetic;
use fedhybrid::hybrid::{kinds_first_newton, run_with, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::MetricsEngine;
use fedhybrid::model::ProblemInstance;

const GRADIENT: (f64, f64) = (0.05, 0.1);
const NEWTON: (f64, f64) = (1.0, 0.1);

fn main() -> fedhybrid::Result<()> {
    let (n, d, mu) = (20, 30, 0.3);
    let (ds, part, _) = gen_linreg_synthetic(n, d, 1)?;
    let problem = ProblemInstance::ridge_regression(&ds, &part, 0.1, mu)?;
    let engine = MetricsEngine::new(&problem)?;

    println!("gradient clients (a, b) = {GRADIENT:?}, Newton clients (a, b) = {NEWTON:?}, mu = {mu}");
    println!(
        "{:>6} {:>10} {:>14} {:>14}",
        "|J2|", "iters", "uplink MB", "final delta"
    );
    for newton in (0..=n).step_by(5) {
        let plan = StepsizePlan::per_kind(kinds_first_newton(n, newton), GRADIENT, NEWTON)?;
        let mut target = None;
        let mut hit = None;
        let last = run_with(&problem, &plan, &Init::zeros(n, d), &RunOptions::new(20_000), |s| {
            let delta = engine.record(s.k, &s.primal(), &s.lambda)?.delta.unwrap_or(f64::NAN);
            if delta <= *target.get_or_insert(1e-6 * delta) {
                hit = Some((s.k, delta));
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        })?;
        let (k, delta) = hit.unwrap_or((last.k, f64::NAN));
        println!(
            "{newton:>6} {k:>10} {:>14.3} {delta:>14.3e}",
            last.uplink_bytes as f64 / 1e6
        );
    }
    Ok(())
}
