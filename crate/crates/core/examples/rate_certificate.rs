//! Rate constants for the safe stepsizes and the per-iteration descent
//! monitors over a full run.
//!
//! `cargo run --release --example rate_certificate [-- <newton clients> <iters>]`

use std::ops::ControlFlow;

use fedhybrid::data::gen_linreg_synthetic;
use fedhybrid::hybrid::{kinds_first_newton, rate_rho, run_with, safe_stepsizes, Init, RunOptions, Snapshot};
use fedhybrid::metrics::MetricsEngine;
use fedhybrid::model::ProblemInstance;
use fedhybrid::theory::{curvature_check, descent_monitors};

fn main() -> fedhybrid::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|s| s.parse::<usize>().expect("integer argument"));
    let newton = args.next().unwrap_or(10);
    let iters = args.next().unwrap_or(300);
    let (n, d, mu) = (20, 30, 9.0);
    let (ds, part, _) = gen_linreg_synthetic(n, d, 1)?;
    let problem = ProblemInstance::ridge_regression(&ds, &part, 0.1, mu)?;
    let curv = problem.curvatures()?;
    let plan = safe_stepsizes(&curv, mu, &kinds_first_newton(n, newton))?;
    let r = rate_rho(&plan, &curv, mu)?;

    println!(
        "m = {:.4e}  l = {:.4e}  m_g = {:.4e}  l_g = {:.4e}  l_L = {:.4e}",
        r.m, r.l, r.m_g, r.l_g, r.l_l
    );
    println!(
        "alpha_lo = {:.4e}  beta_lo = {:.4e}  beta = {:.4e}  kappa = {:.4}",
        r.alpha_lo, r.beta_lo, r.beta, r.kappa
    );
    println!("rho = {:.4e} (statement variant {:.4e})", r.rho, r.rho_statement);
    println!("{}", curvature_check(&problem, 10, 1)?);

    let engine = MetricsEngine::new(&problem)?;
    let mut trace: Vec<Snapshot> = Vec::with_capacity(iters + 1);
    run_with(&problem, &plan, &Init::zeros(n, d), &RunOptions::new(iters), |s| {
        trace.push(s.clone());
        Ok(ControlFlow::Continue(()))
    })?;
    let report = descent_monitors(&trace, &plan, &r, &engine)?;
    println!("{report}");
    Ok(())
}
