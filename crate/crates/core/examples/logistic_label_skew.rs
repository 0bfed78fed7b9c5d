//! Logistic regression with label-skewed clients (11 zero-only, 8 one-only,
//! 1 mixed). Safe stepsizes make almost no progress because the per-client
//! strong convexity is tiny; grid-searched stepsizes converge to the
//! centralized optimum for every mix of client kinds.

use std::ops::ControlFlow;

use fedhybrid::data::{gen_logreg_synthetic, SkewPlan};
use fedhybrid::hybrid::{kinds_first_newton, rate_rho, run_with, safe_stepsizes, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::{aug_lagrangian_gradient, kkt_optimum};
use fedhybrid::model::ProblemInstance;
use fedhybrid::simnet::blocks_norm_squared;

const TOL: f64 = 1e-6;

fn residual(problem: &ProblemInstance, s: &fedhybrid::hybrid::Snapshot) -> f64 {
    let xt = s.primal();
    let g = aug_lagrangian_gradient(problem, &xt, &s.lambda);
    blocks_norm_squared(&xt.w_apply()).sqrt() + blocks_norm_squared(&g.x).sqrt()
}

fn main() -> fedhybrid::Result<()> {
    let (n, d) = (20, 30);
    let (ds, part) = gen_logreg_synthetic(n, d, &SkewPlan::default_for(n), 1)?;
    println!("client sizes {:?}", part.sizes());

    let safe = ProblemInstance::logistic_regression(&ds, &part, 0.1, 9.0)?;
    let curv = safe.curvatures()?;
    let plan = safe_stepsizes(&curv, safe.mu(), &kinds_first_newton(n, 10))?;
    let rho = rate_rho(&plan, &curv, safe.mu())?.rho;
    let last = run_with(&safe, &plan, &Init::zeros(n, d), &RunOptions::new(2000), |_| {
        Ok(ControlFlow::Continue(()))
    })?;
    println!(
        "safe stepsizes (mu = 9, min b = {:.1e}, rho = {rho:.1e}): residual {:.3e} after {} rounds",
        plan.b.iter().copied().fold(f64::INFINITY, f64::min),
        residual(&safe, &last),
        last.k
    );

    let problem = ProblemInstance::logistic_regression(&ds, &part, 0.1, 0.1)?;
    let omega = kkt_optimum(&problem)?.omega;
    println!("tuned: mu = 0.1, gradient (a, b) = (3, 0.03), Newton (a, b) = (1, 0.1)");
    println!("{:>6} {:>8} {:>14}", "|J2|", "rounds", "|x0 - w*|inf");
    for newton in (0..=n).step_by(5) {
        let plan = StepsizePlan::per_kind(kinds_first_newton(n, newton), (3.0, 0.03), (1.0, 0.1))?;
        let mut hit = None;
        run_with(&problem, &plan, &Init::zeros(n, d), &RunOptions::new(3000), |s| {
            if residual(&problem, s) <= TOL {
                hit = Some((s.k, (&s.x0 - &omega).amax()));
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        })?;
        match hit {
            Some((k, err)) => println!("{newton:>6} {k:>8} {err:>14.2e}"),
            None => println!("{newton:>6} {:>8}", "-"),
        }
    }
    Ok(())
}
