//! The exact method of multipliers as an oracle: Newton multiplier steps are
//! exact in one step on quadratics, gradient ascent contracts linearly, and
//! the dual Newton direction at an arbitrary primal point reduces to the
//! Hessian-weighted average of the client iterates.

use std::ops::ControlFlow;

use fedhybrid::data::gen_linreg_synthetic;
use fedhybrid::metrics::kkt_optimum;
use fedhybrid::model::ProblemInstance;
use fedhybrid::reference::{mm_run, DualRule};
use fedhybrid::simnet::StackedPrimal;
use fedhybrid::theory::{dual_newton_relation, stack};
use fedhybrid::Vector;

fn main() -> fedhybrid::Result<()> {
    let (n, d, mu) = (5, 4, 2.0);
    let (ds, part, _) = gen_linreg_synthetic(n, d, 3)?;
    let problem = ProblemInstance::ridge_regression(&ds, &part, 0.1, mu)?;
    let cert = kkt_optimum(&problem)?;
    let lambda0 = vec![Vector::from_element(d, 1.0); n];

    for (name, rule) in [
        ("newton", DualRule::Newton(1.0)),
        ("gradient", DualRule::GradientAscent(mu)),
    ] {
        print!("{name:>9}:");
        mm_run(&problem, rule, &lambda0, 6, |s| {
            let err = (stack(&s.lambda) - stack(&cert.lambda)).norm();
            print!(" {err:.2e}");
            Ok(ControlFlow::Continue(()))
        })?;
        println!();
    }

    let xt = StackedPrimal {
        x0: Vector::from_element(d, 0.5),
        x: (0..n)
            .map(|i| Vector::from_fn(d, |j, _| (i * d + j) as f64 * 0.1 - 1.0))
            .collect(),
    };
    let rel = dual_newton_relation(&xt, &problem)?;
    let y: Vec<String> = rel.y.iter().map(|v| format!("{v:.4}")).collect();
    println!("Hessian-weighted average y = [{}]", y.join(", "));
    println!("dual Newton relation: max |lhs - rhs| = {:.2e}", rel.max_abs_diff());
    Ok(())
}
