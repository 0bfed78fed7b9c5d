//! Log-spaced stepsize grid search for all-gradient or all-Newton clients.
//!
//! `cargo run --release --example grid_search -- <config> <gradient|newton> [budget] [tol]`
//!
//! Every `(a, b)` pair on the grid `{1, 3} × 10^k`, `k = -4..=0` plus `10`
//! is run from zero until `consensus_err + primal_grad_norm <= tol`. The
//! fastest pairs are printed; divergent pairs are dropped.

use std::ops::ControlFlow;

use fedhybrid::config::Config;
use fedhybrid::experiment::build_problem;
use fedhybrid::hybrid::{run_with, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::aug_lagrangian_gradient;
use fedhybrid::simnet::{blocks_norm_squared, UpdateKind};
use rayon::prelude::*;

fn grid() -> Vec<f64> {
    let mut g: Vec<f64> = (-4..=0).flat_map(|k| [1.0, 3.0].map(|m| m * 10f64.powi(k))).collect();
    g.push(10.0);
    g
}

fn main() -> fedhybrid::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: grid_search <config> <gradient|newton> [budget] [tol]");
        std::process::exit(2);
    }
    let cfg = Config::load(&args[0])?;
    let kind = match args[1].as_str() {
        "gradient" => UpdateKind::Gradient,
        "newton" => UpdateKind::Newton,
        other => panic!("unknown client kind {other}"),
    };
    let budget: usize = args.get(2).map_or(2000, |s| s.parse().expect("budget"));
    let tol: f64 = args.get(3).map_or(1e-6, |s| s.parse().expect("tol"));
    let problem = build_problem(&cfg)?;
    let (n, d) = (problem.n(), problem.dim());

    let pairs: Vec<(f64, f64)> = grid()
        .into_iter()
        .flat_map(|a| grid().into_iter().map(move |b| (a, b)))
        .collect();
    let mut results: Vec<(usize, f64, f64, f64)> = pairs
        .par_iter()
        .filter_map(|&(a, b)| {
            let plan = StepsizePlan::per_kind(vec![kind; n], (a, b), (a, b)).ok()?;
            let mut best = f64::INFINITY;
            let mut hit = None;
            let run = run_with(&problem, &plan, &Init::zeros(n, d), &RunOptions::new(budget), |s| {
                let xt = s.primal();
                let g = aug_lagrangian_gradient(&problem, &xt, &s.lambda);
                let r = blocks_norm_squared(&xt.w_apply()).sqrt() + blocks_norm_squared(&g.x).sqrt();
                if !r.is_finite() || r > 1e12 {
                    return Ok(ControlFlow::Break(()));
                }
                best = best.min(r);
                if r <= tol {
                    hit = Some(s.k);
                    return Ok(ControlFlow::Break(()));
                }
                Ok(ControlFlow::Continue(()))
            });
            run.ok()?;
            best.is_finite().then(|| (hit.unwrap_or(usize::MAX), a, b, best))
        })
        .collect();
    results.sort_by(|x, y| x.0.cmp(&y.0).then(x.3.total_cmp(&y.3)));

    println!("{} clients of kind {:?}, budget {budget}, tol {tol:e}", n, kind);
    println!("{:>8} {:>8} {:>10} {:>12}", "a", "b", "iters", "best resid");
    for (k, a, b, r) in results.iter().take(10) {
        let iters = if *k == usize::MAX {
            "-".to_string()
        } else {
            k.to_string()
        };
        println!("{a:>8.0e} {b:>8.0e} {iters:>10} {r:>12.3e}");
    }
    Ok(())
}
