//! Full-gradient FedAvg against FedH-N on synthetic least squares: rounds to
//! reach a function gap of `1e-8` over a stepsize grid and both weightings.

use std::ops::ControlFlow;

use fedhybrid::data::gen_linreg_synthetic;
use fedhybrid::hybrid::{kinds_first_newton, run_with, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::MetricsEngine;
use fedhybrid::model::ProblemInstance;
use fedhybrid::reference::{fedavg_run, FedAvgOptions, Weighting};
use fedhybrid::simnet::Executor;
use fedhybrid::Vector;

const BUDGET: usize = 5000;
const TARGET: f64 = 1e-8;

fn main() -> fedhybrid::Result<()> {
    let (n, d, mu) = (20, 30, 0.3);
    let (ds, part, _) = gen_linreg_synthetic(n, d, 1)?;
    let problem = ProblemInstance::ridge_regression(&ds, &part, 0.1, mu)?;
    let engine = MetricsEngine::new(&problem)?;
    let exec = Executor::from_env()?;

    let plan = StepsizePlan::per_kind(kinds_first_newton(n, n), (0.05, 0.1), (1.0, 0.1))?;
    let mut fedh = None;
    run_with(
        &problem,
        &plan,
        &Init::zeros(n, d),
        &RunOptions::new(BUDGET).executor(exec.clone()),
        |s| {
            if engine.record(s.k, &s.primal(), &s.lambda)?.fun_gap <= TARGET {
                fedh = Some(s.k);
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    println!(
        "FedH-N: {}",
        fedh.map_or("not reached".into(), |k| format!("{k} rounds"))
    );

    println!("{:>10} {:>6} {:>12} {:>12}", "weighting", "eta", "rounds", "final gap");
    for weighting in [Weighting::Samples, Weighting::Uniform] {
        for eta in [0.01, 0.03, 0.1, 0.2, 0.3, 0.35, 0.4] {
            let opts = FedAvgOptions {
                eta,
                local_steps: 1,
                weighting,
            };
            let mut hit = None;
            let mut gap = f64::NAN;
            fedavg_run(&problem, &opts, &Vector::zeros(d), BUDGET, &exec, |s| {
                gap = engine.primal_only_record(s.k, &s.omega).fun_gap;
                if !gap.is_finite() || gap > 1e12 {
                    return Ok(ControlFlow::Break(()));
                }
                if gap <= TARGET {
                    hit = Some(s.k);
                    return Ok(ControlFlow::Break(()));
                }
                Ok(ControlFlow::Continue(()))
            })?;
            let rounds = hit.map_or("-".to_string(), |k| k.to_string());
            println!("{:>10} {eta:>6} {rounds:>12} {gap:>12.3e}", format!("{weighting:?}"));
        }
    }
    Ok(())
}
