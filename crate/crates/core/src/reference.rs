//! Oracle and baseline solvers: the exact method of multipliers and
//! full-gradient FedAvg.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::metrics::InnerSolver;
use crate::model::ProblemInstance;
use crate::numerics::{ensure_len, Matrix, SpdFactor, Vector};
use crate::simnet::{Executor, StackedPrimal, BYTES_PER_REAL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DualRule {
    /// `λ' = λ + β₁ ∇g(λ)`.
    GradientAscent(f64),
    /// `λ' = λ + β₂ (−∇²g(λ))⁻¹ ∇g(λ)`.
    Newton(f64),
}

#[derive(Clone, Debug)]
pub struct MmStep {
    /// `x̃*(λ)` for the incoming multipliers.
    pub primal: StackedPrimal,
    pub lambda: Vec<Vector>,
}

/// Solves `(−∇²g(λ)) v = r` at the inner minimizer `primal` without forming the
/// `nd × nd` dual Hessian: with `H_i = ∇²f_i(x_i)` and `z = (Σ H_i)⁻¹ Σ H_i r_i`,
/// the solution is `v_i = (H_i + μI) r_i − H_i z`.
pub fn dual_newton_solve(problem: &ProblemInstance, primal: &StackedPrimal, r: &[Vector]) -> Result<Vec<Vector>> {
    let d = problem.dim();
    let hess: Vec<Matrix> = problem
        .objectives()
        .iter()
        .zip(&primal.x)
        .map(|(o, x)| o.hessian(x))
        .collect();
    let mut total = Matrix::zeros(d, d);
    let mut rhs = Vector::zeros(d);
    for (h, ri) in hess.iter().zip(r) {
        total += h;
        rhs += h * ri;
    }
    let z = SpdFactor::new(&total)?.solve(&rhs)?;
    Ok(hess
        .iter()
        .zip(r)
        .map(|(h, ri)| h * (ri - &z) + ri * problem.mu())
        .collect())
}

fn mm_step_with(
    solver: &InnerSolver<'_>,
    lambda: &[Vector],
    rule: DualRule,
    warm: Option<&StackedPrimal>,
) -> Result<MmStep> {
    let problem = solver.problem();
    let primal = solver.solve(lambda, warm)?;
    let grad = primal.w_apply();
    let lambda = match rule {
        DualRule::GradientAscent(beta) => lambda.iter().zip(&grad).map(|(l, g)| l + g * beta).collect(),
        DualRule::Newton(beta) => {
            let dir = dual_newton_solve(problem, &primal, &grad)?;
            lambda.iter().zip(&dir).map(|(l, v)| l + v * beta).collect()
        }
    };
    Ok(MmStep { primal, lambda })
}

/// One exact multiplier step: minimize `L̃(·, λ)` then update `λ` by `rule`.
pub fn mm_step(lambda: &[Vector], problem: &ProblemInstance, rule: DualRule) -> Result<MmStep> {
    mm_step_with(&InnerSolver::new(problem)?, lambda, rule, None)
}

/// Multipliers after `k` exact steps together with the primal minimizer that produced them.
#[derive(Clone, Debug)]
pub struct MmSnapshot {
    pub k: usize,
    pub primal: StackedPrimal,
    pub lambda: Vec<Vector>,
}

/// Runs `iters` multiplier steps from `lambda0`. Snapshot `k` pairs `λ^k` with
/// `x̃*(λ^{k−1})`; snapshot 0 pairs `λ^0` with `x̃*(λ^0)`.
pub fn mm_run<H>(problem: &ProblemInstance, rule: DualRule, lambda0: &[Vector], iters: usize, mut hook: H) -> Result<()>
where
    H: FnMut(&MmSnapshot) -> Result<ControlFlow<()>>,
{
    if iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    let solver = InnerSolver::new(problem)?;
    let mut lambda = lambda0.to_vec();
    let mut primal = solver.solve(&lambda, None)?;
    if hook(&MmSnapshot {
        k: 0,
        primal: primal.clone(),
        lambda: lambda.clone(),
    })?
    .is_break()
    {
        return Ok(());
    }
    for k in 1..=iters {
        let step = mm_step_with(&solver, &lambda, rule, Some(&primal))?;
        primal = step.primal;
        lambda = step.lambda;
        if hook(&MmSnapshot {
            k,
            primal: primal.clone(),
            lambda: lambda.clone(),
        })?
        .is_break()
        {
            break;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `N_i / Σ N_j`.
    #[default]
    Samples,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FedAvgOptions {
    pub eta: f64,
    pub local_steps: usize,
    pub weighting: Weighting,
}

impl FedAvgOptions {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            local_steps: 1,
            weighting: Weighting::Samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FedAvgSnapshot {
    pub k: usize,
    pub omega: Vector,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

fn fedavg_weights(problem: &ProblemInstance, weighting: Weighting) -> Vec<f64> {
    let n = problem.n();
    match weighting {
        Weighting::Uniform => vec![1.0 / n as f64; n],
        Weighting::Samples => {
            let counts: Vec<f64> = problem.objectives().iter().map(|o| o.sample_count() as f64).collect();
            let total: f64 = counts.iter().sum();
            if total > 0.0 {
                counts.iter().map(|c| c / total).collect()
            } else {
                vec![1.0 / n as f64; n]
            }
        }
    }
}

/// Full-gradient FedAvg: every round each client runs `local_steps` gradient
/// steps from the broadcast point and the server averages the results.
pub fn fedavg_run<H>(
    problem: &ProblemInstance,
    opts: &FedAvgOptions,
    omega0: &Vector,
    iters: usize,
    exec: &Executor,
    mut hook: H,
) -> Result<Vector>
where
    H: FnMut(&FedAvgSnapshot) -> Result<ControlFlow<()>>,
{
    ensure_len(omega0, problem.dim())?;
    if !(opts.eta >= 0.0) || !opts.eta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "stepsize must be non-negative, got {}",
            opts.eta
        )));
    }
    if opts.local_steps == 0 {
        return Err(Error::InvalidArgument("local steps must be at least 1".into()));
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    let weights = fedavg_weights(problem, opts.weighting);
    let (n, d) = (problem.n() as u64, problem.dim() as u64);
    let per_round = n * d * BYTES_PER_REAL;
    let mut omega = omega0.clone();
    let mut snap = FedAvgSnapshot {
        k: 0,
        omega: omega.clone(),
        uplink_bytes: 0,
        downlink_bytes: 0,
    };
    if hook(&snap)?.is_break() {
        return Ok(omega);
    }
    for k in 1..=iters {
        let locals = exec.map(problem.objectives(), |_, obj| {
            let mut x = omega.clone();
            for _ in 0..opts.local_steps {
                x -= obj.gradient(&x) * opts.eta;
            }
            x
        });
        omega = locals
            .iter()
            .zip(&weights)
            .fold(Vector::zeros(omega.len()), |acc, (x, w)| acc + x * *w);
        snap = FedAvgSnapshot {
            k,
            omega: omega.clone(),
            uplink_bytes: snap.uplink_bytes + per_round,
            downlink_bytes: snap.downlink_bytes + per_round,
        };
        if hook(&snap)?.is_break() {
            break;
        }
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::inner_argmin;
    use crate::metrics::{dual_value, kkt_optimum};
    use crate::model::{Objective, QuadraticObjective};
    use crate::theory::{dual_hessian_formula, stack};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn sq(center: f64) -> Arc<dyn Objective> {
        Arc::new(QuadraticObjective::new(&Matrix::identity(1, 1), &Vector::from_element(1, center), 0.0).unwrap())
    }

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn random_quadratic(n: usize, d: usize, seed: u64) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objs = (0..n)
            .map(|i| {
                let rows = d + 1 + i;
                let a = Matrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0));
                let b = Vector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
                Arc::new(QuadraticObjective::new(&a, &b, 0.05).unwrap()) as Arc<dyn Objective>
            })
            .collect();
        ProblemInstance::new(objs, 2.0).unwrap()
    }

    #[test]
    fn structured_newton_solve_matches_dense() {
        let p = random_quadratic(4, 3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let lam: Vec<Vector> = (0..4)
            .map(|_| Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let r: Vec<Vector> = (0..4)
            .map(|_| Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let v = dual_newton_solve(&p, &inner_argmin(&lam, &p).unwrap(), &r).unwrap();
        let back = -dual_hessian_formula(&lam, &p).unwrap() * stack(&v);
        assert!((back - stack(&r)).amax() < 1e-10);
    }

    #[test]
    fn mm_step_toy() {
        let p = ProblemInstance::new(vec![sq(0.0)], 1.0).unwrap();
        let step = mm_step(&[s(1.0)], &p, DualRule::GradientAscent(0.5)).unwrap();
        assert_abs_diff_eq!(step.primal.x0[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(step.primal.x[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(step.lambda[0][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(dual_value(&[s(1.0)], &p).unwrap(), -0.5, epsilon = 1e-12);
        for l0 in [-3.0, 0.4, 7.0] {
            let step = mm_step(&[s(l0)], &p, DualRule::Newton(1.0)).unwrap();
            assert_abs_diff_eq!(step.lambda[0][0], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mm_fixed_point_at_optimum() {
        let p = random_quadratic(3, 2, 1);
        let cert = kkt_optimum(&p).unwrap();
        for rule in [DualRule::GradientAscent(0.3), DualRule::Newton(1.0)] {
            let step = mm_step(&cert.lambda, &p, rule).unwrap();
            assert!(step.primal.w_apply().iter().all(|v| v.amax() <= 1e-10));
            for (a, b) in step.lambda.iter().zip(&cert.lambda) {
                assert!((a - b).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn one_newton_step_is_exact_on_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 2, 5] {
            let p = random_quadratic(n, 3, n as u64);
            let cert = kkt_optimum(&p).unwrap();
            let l0: Vec<Vector> = (0..n)
                .map(|_| Vector::from_fn(3, |_, _| rng.random_range(-5.0..5.0)))
                .collect();
            let step = mm_step(&l0, &p, DualRule::Newton(1.0)).unwrap();
            let err: f64 = step
                .lambda
                .iter()
                .zip(&cert.lambda)
                .map(|(a, b)| (a - b).norm_squared())
                .sum();
            assert!(err.sqrt() <= 1e-8, "n={n}: {}", err.sqrt());
        }
    }

    #[test]
    fn gradient_ascent_is_monotone_on_quadratics() {
        let p = random_quadratic(3, 2, 5);
        let g = p.global_curvature().unwrap();
        let beta = 1.0 / (p.mu() + g.l);
        let mut values = Vec::new();
        mm_run(
            &p,
            DualRule::GradientAscent(beta),
            &vec![Vector::zeros(2); 3],
            30,
            |snap| {
                values.push(dual_value(&snap.lambda, &p)?);
                Ok(ControlFlow::Continue(()))
            },
        )
        .unwrap();
        for w in values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    fn fedavg_trace(p: &ProblemInstance, opts: FedAvgOptions, omega0: Vector, iters: usize) -> Vec<Vector> {
        let mut out = Vec::new();
        fedavg_run(p, &opts, &omega0, iters, &Executor::Sequential, |s| {
            out.push(s.omega.clone());
            Ok(ControlFlow::Continue(()))
        })
        .unwrap();
        out
    }

    #[test]
    fn fedavg_examples() {
        let p = ProblemInstance::new(vec![sq(0.0)], 1.0).unwrap();
        let tr = fedavg_trace(&p, FedAvgOptions::new(1.0), s(5.0), 1);
        assert_abs_diff_eq!(tr[1][0], 0.0, epsilon = 1e-15);

        let p = random_quadratic(3, 2, 9);
        let opts = FedAvgOptions {
            eta: 0.2,
            local_steps: 1,
            weighting: Weighting::Uniform,
        };
        let w0 = Vector::from_row_slice(&[0.5, -0.3]);
        let tr = fedavg_trace(&p, opts, w0.clone(), 1);
        let expect = &w0 - p.total_gradient(&w0) * (0.2 / 3.0);
        assert!((&tr[1] - expect).amax() <= 1e-14);

        let tr = fedavg_trace(&p, FedAvgOptions::new(0.0), w0.clone(), 5);
        assert!(tr.iter().all(|w| *w == w0));
    }

    #[test]
    fn fedavg_sample_weights() {
        let p = random_quadratic(3, 2, 4);
        let w = fedavg_weights(&p, Weighting::Samples);
        let counts: Vec<f64> = p.objectives().iter().map(|o| o.sample_count() as f64).collect();
        let total: f64 = counts.iter().sum();
        for (wi, ci) in w.iter().zip(&counts) {
            assert_abs_diff_eq!(*wi, ci / total, epsilon = 1e-15);
        }
    }

    #[test]
    fn fedavg_rejects_bad_options() {
        let p = ProblemInstance::new(vec![sq(0.0)], 1.0).unwrap();
        let mut opts = FedAvgOptions::new(0.1);
        opts.local_steps = 0;
        assert!(fedavg_run(&p, &opts, &s(0.0), 1, &Executor::Sequential, |_| Ok(
            ControlFlow::Continue(())
        ))
        .is_err());
        assert!(fedavg_run(
            &p,
            &FedAvgOptions::new(-1.0),
            &s(0.0),
            1,
            &Executor::Sequential,
            |_| Ok(ControlFlow::Continue(()))
        )
        .is_err());
    }
}
