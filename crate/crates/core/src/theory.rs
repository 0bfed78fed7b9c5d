//! Executable versions of the convergence analysis: dense dual-derivative
//! oracles, curvature checks and per-iteration descent monitors.
//!
//! Everything here materializes the full `(n+1)d` system and is meant for
//! verification at moderate sizes.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hybrid::{RateConstants, Snapshot, StepsizePlan};
use crate::metrics::{aug_lagrangian_gradient, IterateRecord, MetricsEngine};
use crate::model::ProblemInstance;
use crate::numerics::{eig_extremes, symmetrize, Matrix, SpdFactor, Vector};
use crate::simnet::{StackedPrimal, UpdateKind};

/// Dense `W = (𝟙_n, −I_n) ⊗ I_d`, shape `nd × (n+1)d`.
pub fn w_matrix(n: usize, d: usize) -> Matrix {
    let mut w = Matrix::zeros(n * d, (n + 1) * d);
    for i in 0..n {
        for j in 0..d {
            w[(i * d + j, j)] = 1.0;
            w[(i * d + j, (i + 1) * d + j)] = -1.0;
        }
    }
    w
}

/// `∇²f̃(x̃) + μWᵀW`; the server block of `∇²f̃` is zero.
pub fn lagrangian_hessian(problem: &ProblemInstance, xt: &StackedPrimal) -> Matrix {
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    let w = w_matrix(n, d);
    let mut h = w.tr_mul(&w) * mu;
    for (i, (obj, xi)) in problem.objectives().iter().zip(&xt.x).enumerate() {
        let off = (i + 1) * d;
        let mut block = h.view_mut((off, off), (d, d));
        block += obj.hessian(xi);
    }
    h
}

/// Concatenates equal-length blocks into one vector.
pub fn stack(blocks: &[Vector]) -> Vector {
    let d = blocks.first().map_or(0, Vector::len);
    Vector::from_fn(blocks.len() * d, |r, _| blocks[r / d][r % d])
}

/// Splits a vector into blocks of length `d`.
pub fn unstack(v: &Vector, d: usize) -> Vec<Vector> {
    v.as_slice().chunks(d).map(Vector::from_column_slice).collect()
}

/// `∇g(λ) = W x̃*(λ)`.
pub fn dual_grad_formula(lambda: &[Vector], problem: &ProblemInstance) -> Result<Vec<Vector>> {
    Ok(crate::metrics::inner_argmin(lambda, problem)?.w_apply())
}

/// `−W(∇²_{x̃x̃}L̃)⁻¹Wᵀ` at `x̃ = xt`.
fn sandwich(problem: &ProblemInstance, xt: &StackedPrimal) -> Result<Matrix> {
    let w = w_matrix(problem.n(), problem.dim());
    let h = SpdFactor::new(&lagrangian_hessian(problem, xt))?;
    let inner = h.solve_matrix(&w.transpose())?;
    Ok(-symmetrize(&(&w * inner)))
}

/// `∇²g(λ) = −W(∇²f̃(x̃*(λ)) + μWᵀW)⁻¹Wᵀ`, shape `nd × nd`.
pub fn dual_hessian_formula(lambda: &[Vector], problem: &ProblemInstance) -> Result<Matrix> {
    let xs = crate::metrics::inner_argmin(lambda, problem)?;
    sandwich(problem, &xs)
}

/// `Δλ̂_i = −(∇²f_i(x_i) + μI)(x_0 − x_i)`.
pub fn approx_dual_newton_dir(xt: &StackedPrimal, problem: &ProblemInstance) -> Result<Vec<Vector>> {
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    if xt.x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: xt.x.len(),
        });
    }
    crate::numerics::ensure_len(&xt.x0, d)?;
    problem
        .objectives()
        .iter()
        .zip(&xt.x)
        .map(|(obj, xi)| {
            crate::numerics::ensure_len(xi, d)?;
            let h = obj.hessian(xi) + Matrix::identity(d, d) * mu;
            Ok(-(h * (&xt.x0 - xi)))
        })
        .collect()
}

/// Both sides of the exact relation between the approximate dual Newton
/// direction and the Hessian-weighted average `y`.
#[derive(Clone, Debug)]
pub struct NewtonRelation {
    /// `WᵀΔλ̆` with `Δλ̆` solving `−W(∇²L̃)⁻¹Wᵀ Δλ̆ = W x̃`.
    pub lhs: Vector,
    /// `∇²L̃ (𝟙 ⊗ y − x̃)`.
    pub rhs: Vector,
    pub y: Vector,
}

impl NewtonRelation {
    pub fn max_abs_diff(&self) -> f64 {
        (&self.lhs - &self.rhs).amax()
    }
}

pub fn dual_newton_relation(xt: &StackedPrimal, problem: &ProblemInstance) -> Result<NewtonRelation> {
    let (n, d) = (problem.n(), problem.dim());
    let hg = sandwich(problem, xt)?;
    let grad = stack(&xt.w_apply());
    // hg is negative definite
    let step = -SpdFactor::new(&(-hg))?.solve(&grad)?;
    let w = w_matrix(n, d);
    let lhs = w.tr_mul(&step);

    let mut hsum = Matrix::zeros(d, d);
    let mut hx = Vector::zeros(d);
    for (obj, xi) in problem.objectives().iter().zip(&xt.x) {
        let h = obj.hessian(xi);
        hx += &h * xi;
        hsum += h;
    }
    let y = SpdFactor::new(&hsum)?.solve(&hx)?;
    let diff = StackedPrimal {
        x0: &y - &xt.x0,
        x: xt.x.iter().map(|xi| &y - xi).collect(),
    };
    let rhs = lagrangian_hessian(problem, xt) * diff.flatten();
    Ok(NewtonRelation { lhs, rhs, y })
}

pub const CURVATURE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub samples: usize,
    /// Allowed range for eigenvalues of `−∇²g`.
    pub dual_bounds: Interval,
    /// Observed extremes over all samples.
    pub dual_observed: Interval,
    /// Allowed range for eigenvalues of `∇²f(x) + μM`.
    pub primal_bounds: Interval,
    pub primal_observed: Interval,
    pub tol: f64,
}

impl CurvatureReport {
    pub fn dual_ok(&self) -> bool {
        self.dual_observed.lo >= self.dual_bounds.lo - self.tol
            && self.dual_observed.hi <= self.dual_bounds.hi + self.tol
    }

    pub fn primal_ok(&self) -> bool {
        self.primal_observed.lo >= self.primal_bounds.lo - self.tol
            && self.primal_observed.hi <= self.primal_bounds.hi + self.tol
    }

    pub fn passed(&self) -> bool {
        self.dual_ok() && self.primal_ok()
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

impl fmt::Display for CurvatureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "curvature samples={} tol={:e}", self.samples, self.tol)?;
        writeln!(
            f,
            "  dual   {} observed=[{:.6e}, {:.6e}] allowed=[{:.6e}, {:.6e}]",
            verdict(self.dual_ok()),
            self.dual_observed.lo,
            self.dual_observed.hi,
            self.dual_bounds.lo,
            self.dual_bounds.hi
        )?;
        write!(
            f,
            "  primal {} observed=[{:.6e}, {:.6e}] allowed=[{:.6e}, {:.6e}]",
            verdict(self.primal_ok()),
            self.primal_observed.lo,
            self.primal_observed.hi,
            self.primal_bounds.lo,
            self.primal_bounds.hi
        )
    }
}

/// Dense `∇²f(x) + μM` with `M = I − Z`.
pub fn reduced_hessian(problem: &ProblemInstance, x: &[Vector]) -> Matrix {
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    let mut h = Matrix::zeros(n * d, n * d);
    for (i, (obj, xi)) in problem.objectives().iter().zip(x).enumerate() {
        let mut block = h.view_mut((i * d, i * d), (d, d));
        block += obj.hessian(xi) + Matrix::identity(d, d) * mu;
        for j in 0..n {
            for k in 0..d {
                h[(i * d + k, j * d + k)] -= mu / n as f64;
            }
        }
    }
    h
}

/// Samples points around the optimum and checks the dual and primal curvature intervals.
pub fn curvature_check(problem: &ProblemInstance, samples: usize, seed: u64) -> Result<CurvatureReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "curvature check needs at least one sample".into(),
        ));
    }
    let g = problem.global_curvature()?;
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    let cert = crate::metrics::kkt_optimum(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |base: &Vector| -> Vector { base + Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)) };
    let mut dual = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };
    let mut primal = dual.clone();
    let quadratic = problem.all_quadratic();
    for s in 0..samples {
        let lambda: Vec<Vector> = cert.lambda.iter().map(&mut noise).collect();
        let (lo, hi) = eig_extremes(&(-dual_hessian_formula(&lambda, problem)?))?;
        dual.lo = dual.lo.min(lo);
        dual.hi = dual.hi.max(hi);
        if !quadratic || s == 0 {
            let x: Vec<Vector> = (0..n).map(|_| noise(&cert.omega)).collect();
            let (lo, hi) = eig_extremes(&reduced_hessian(problem, &x))?;
            primal.lo = primal.lo.min(lo);
            primal.hi = primal.hi.max(hi);
        }
    }
    Ok(CurvatureReport {
        samples,
        dual_bounds: Interval {
            lo: 1.0 / (mu + g.l),
            hi: 1.0 / mu,
        },
        dual_observed: dual,
        primal_bounds: Interval { lo: g.m, hi: g.l + mu },
        primal_observed: primal,
        tol: CURVATURE_TOL,
    })
}

/// Outcome of one inequality checked along a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorOutcome {
    pub name: &'static str,
    pub checked: usize,
    /// Iteration index `k` of the first violation.
    pub first_violation: Option<usize>,
    /// Largest `lhs − rhs` seen; negative means every check had margin.
    pub max_excess: f64,
}

impl MonitorOutcome {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            first_violation: None,
            max_excess: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, k: usize, lhs: f64, rhs: f64, slack: f64) {
        self.checked += 1;
        let excess = lhs - rhs;
        if excess > self.max_excess || self.max_excess.is_nan() {
            self.max_excess = excess;
        }
        if (excess > slack || excess.is_nan()) && self.first_violation.is_none() {
            self.first_violation = Some(k);
        }
    }

    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct MonitorReport {
    /// Additive tolerance applied to every check.
    pub slack: f64,
    pub monitors: Vec<MonitorOutcome>,
    /// One record per snapshot, in trace order.
    pub records: Vec<IterateRecord>,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.monitors.iter().all(MonitorOutcome::passed)
    }

    pub fn get(&self, name: &str) -> Option<&MonitorOutcome> {
        self.monitors.iter().find(|m| m.name == name)
    }
}

impl fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "monitors slack={:.3e} status={}", self.slack, verdict(self.passed()))?;
        for m in &self.monitors {
            let first = m.first_violation.map_or_else(|| "-".to_string(), |k| k.to_string());
            writeln!(
                f,
                "  {:<22} {} checked={} first_violation={} max_excess={:.3e}",
                m.name,
                verdict(m.passed()),
                m.checked,
                first,
                m.max_excess
            )?;
        }
        Ok(())
    }
}

pub const MONITOR_SLACK_FACTOR: f64 = 1e-9;
const BOUND_RTOL: f64 = 1e-12;

pub const DUAL_GAP_BOUND: &str = "dual_gap_bound";
pub const PRIMAL_TRACKING_BOUND: &str = "primal_tracking_bound";
pub const CONTRACTION: &str = "contraction";
pub const TRACKING_VS_GRADIENT: &str = "tracking_vs_gradient";
pub const STEPSIZE_CONSTANTS: &str = "stepsize_constants";
pub const Q_MIN_EIGENVALUE: &str = "q_min_eigenvalue";

/// Per-client quantities at one iterate.
struct Weights {
    /// `D_i` (identity for gradient clients).
    d: Vec<Option<SpdFactor>>,
    dmat: Vec<Option<Matrix>>,
}

impl Weights {
    fn new(problem: &ProblemInstance, plan: &StepsizePlan, x: &[Vector]) -> Result<Self> {
        let (d, mu) = (problem.dim(), problem.mu());
        let mut fs = Vec::with_capacity(x.len());
        let mut ms = Vec::with_capacity(x.len());
        for ((obj, xi), kind) in problem.objectives().iter().zip(x).zip(&plan.kinds) {
            match kind {
                UpdateKind::Gradient => {
                    fs.push(None);
                    ms.push(None);
                }
                UpdateKind::Newton => {
                    let h = obj.hessian(xi) + Matrix::identity(d, d) * mu;
                    fs.push(Some(SpdFactor::new(&h)?));
                    ms.push(Some(h));
                }
            }
        }
        Ok(Self { d: fs, dmat: ms })
    }

    /// `Σ b_i v_iᵀ D_i v_i`.
    fn bd_norm2(&self, plan: &StepsizePlan, v: &[Vector]) -> f64 {
        v.iter()
            .zip(&self.dmat)
            .zip(&plan.b)
            .map(|((vi, di), b)| {
                b * match di {
                    None => vi.norm_squared(),
                    Some(h) => vi.dot(&(h * vi)),
                }
            })
            .sum()
    }

    fn d_inv(&self, i: usize, v: &Vector) -> Result<Vector> {
        match &self.d[i] {
            None => Ok(v.clone()),
            Some(f) => f.solve(v),
        }
    }

    fn d_inv_matrix(&self, i: usize, dim: usize) -> Matrix {
        match &self.d[i] {
            None => Matrix::identity(dim, dim),
            Some(f) => f.inverse(),
        }
    }
}

/// Checks the dual-gap bound, the primal-tracking bound, the `(1−ρ)`
/// contraction, the tracking-versus-gradient bound and the stepsize-derived
/// constant bounds along consecutive snapshots of a trace.
pub fn descent_monitors(
    trace: &[Snapshot],
    plan: &StepsizePlan,
    rates: &RateConstants,
    engine: &MetricsEngine<'_>,
) -> Result<MonitorReport> {
    let problem = engine.problem();
    let (d, mu) = (problem.dim(), problem.mu());
    let m2 = rates.m * rates.m;
    let (beta, kappa, l_g, l_l) = (rates.beta, rates.kappa, rates.l_g, rates.l_l);

    let mut dual_gap = MonitorOutcome::new(DUAL_GAP_BOUND);
    let mut tracking = MonitorOutcome::new(PRIMAL_TRACKING_BOUND);
    let mut contraction = MonitorOutcome::new(CONTRACTION);
    let mut mx = MonitorOutcome::new(TRACKING_VS_GRADIENT);
    let mut constants = MonitorOutcome::new(STEPSIZE_CONSTANTS);
    let mut qmin = MonitorOutcome::new(Q_MIN_EIGENVALUE);

    struct Row {
        k: usize,
        rec: IterateRecord,
        grad_g_bd: f64,
        grad_x2: f64,
        grad_x_p: f64,
        mx_lhs: f64,
        mx_rhs: f64,
    }

    let mut rows: Vec<Row> = Vec::with_capacity(trace.len());
    for snap in trace {
        let xt = snap.primal();
        let rec = engine.record(snap.k, &xt, &snap.lambda)?;
        let xs = engine.solver().solve(&snap.lambda, Some(&xt))?;
        let w = Weights::new(problem, plan, &snap.x)?;
        let grad_g = xs.w_apply();
        let grad_g_bd = w.bd_norm2(plan, &grad_g);
        let grad_x = aug_lagrangian_gradient(problem, &xt, &snap.lambda).x;
        let grad_x2: f64 = grad_x.iter().map(Vector::norm_squared).sum();

        let mut grad_x_p = 0.0;
        let mut max_adinv: f64 = 0.0;
        let mut min_adinv = f64::INFINITY;
        let mut min_bd = f64::INFINITY;
        let mut q_lo = f64::INFINITY;
        for (i, gi) in grad_x.iter().enumerate() {
            let a = plan.a[i];
            let wi = w.d_inv(i, gi)?;
            grad_x_p += a * gi.dot(&wi)
                - (beta + l_l / 2.0) * a * a * wi.norm_squared()
                - beta * kappa / m2 * gi.norm_squared();

            let dinv = w.d_inv_matrix(i, d);
            let (lo, hi) = eig_extremes(&dinv)?;
            max_adinv = max_adinv.max(a * hi);
            min_adinv = min_adinv.min(a * lo);
            let dmat = w.dmat[i].clone().unwrap_or_else(|| Matrix::identity(d, d));
            min_bd = min_bd.min(plan.b[i] * eig_extremes(&dmat)?.0);
            let q = &dinv * a
                - (&dinv * &dinv) * ((beta + l_l / 2.0) * a * a)
                - Matrix::identity(d, d) * ((beta * kappa + (6.0 + 12.0 * beta * l_g) * beta) / m2);
            q_lo = q_lo.min(eig_extremes(&symmetrize(&q))?.0);
        }

        let diff: Vec<Vector> = xt.w_apply().iter().zip(&grad_g).map(|(a, b)| a - b).collect();
        let k = snap.k;
        let mx_lhs = w.bd_norm2(plan, &diff);

        let tol = |v: f64| BOUND_RTOL * v.abs().max(1e-300);
        constants.observe(k, max_adinv, 1.0 / (2.0 * (2.0 * beta + l_l)), tol(max_adinv));
        constants.observe(k, rates.alpha_lo, min_adinv, tol(min_adinv));
        constants.observe(k, rates.beta_lo, min_bd, tol(min_bd));
        qmin.observe(k, rates.alpha_lo / 4.0, q_lo, tol(rates.alpha_lo));

        rows.push(Row {
            k,
            rec,
            grad_g_bd,
            grad_x2,
            grad_x_p,
            mx_lhs,
            mx_rhs: beta / m2 * grad_x2,
        });
    }

    let cap = (mu / 9.0).min(rates.alpha_lo * m2 / 21.0);
    constants.observe(0, beta, cap, BOUND_RTOL * cap);
    constants.observe(0, kappa + 12.0 * l_g * beta, 4.5, BOUND_RTOL * 4.5);

    let delta0 = rows.first().and_then(|r| r.rec.delta).unwrap_or(0.0).max(0.0);
    let slack = MONITOR_SLACK_FACTOR * delta0;
    for r in &rows {
        mx.observe(r.k, r.mx_lhs, r.mx_rhs, slack);
    }

    for pair in rows.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        if next.k != cur.k + 1 {
            continue;
        }
        let (dl, dl1) = (cur.rec.delta_lambda.unwrap(), next.rec.delta_lambda.unwrap());
        let (dx, dx1) = (cur.rec.delta_x.unwrap(), next.rec.delta_x.unwrap());
        let rhs3 = dl - (0.5 - beta * l_g) * cur.grad_g_bd + (0.5 + beta * l_g) * (beta / m2) * cur.grad_x2;
        dual_gap.observe(cur.k, dl1, rhs3, slack);
        let rhs4 = dx + kappa * cur.grad_g_bd - cur.grad_x_p + dl - dl1;
        tracking.observe(cur.k, dx1, rhs4, slack);
        let (d_now, d_next) = (cur.rec.delta.unwrap(), next.rec.delta.unwrap());
        contraction.observe(cur.k, d_next, (1.0 - rates.rho) * d_now, slack);
    }

    Ok(MonitorReport {
        slack,
        monitors: vec![dual_gap, tracking, contraction, mx, constants, qmin],
        records: rows.into_iter().map(|r| r.rec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{kinds_first_newton, rate_rho, run, safe_stepsizes, Init, RunOptions};
    use crate::metrics::{dual_value, kkt_optimum};
    use crate::model::{Objective, QuadraticObjective};
    use crate::numerics::{finite_diff_grad, finite_diff_jacobian, try_finite_diff_grad};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::sync::Arc;

    fn sq(center: f64) -> Arc<dyn Objective> {
        Arc::new(QuadraticObjective::new(&Matrix::identity(1, 1), &Vector::from_element(1, center), 0.0).unwrap())
    }

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn toy1(mu: f64) -> ProblemInstance {
        ProblemInstance::new(vec![sq(0.0)], mu).unwrap()
    }

    fn toy2() -> ProblemInstance {
        ProblemInstance::new(vec![sq(1.0), sq(-1.0)], 9.0).unwrap()
    }

    fn random_quadratic(n: usize, d: usize, seed: u64) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objs = (0..n)
            .map(|_| {
                let a = Matrix::from_fn(d + 2, d, |_, _| rng.random_range(-1.0..1.0));
                let b = Vector::from_fn(d + 2, |_, _| rng.random_range(-1.0..1.0));
                Arc::new(QuadraticObjective::new(&a, &b, 0.1).unwrap()) as Arc<dyn Objective>
            })
            .collect();
        ProblemInstance::new(objs, 3.0).unwrap()
    }

    #[test]
    fn dual_gradient_toy() {
        for l in [-2.0, 0.0, 1.0] {
            let g = dual_grad_formula(&[s(l)], &toy1(1.0)).unwrap();
            assert_abs_diff_eq!(g[0][0], -l, epsilon = 1e-12);
        }
        let p = toy2();
        let cert = kkt_optimum(&p).unwrap();
        let g = dual_grad_formula(&cert.lambda, &p).unwrap();
        assert!(g.iter().all(|v| v.amax() <= 1e-12));
    }

    #[test]
    fn dual_hessian_toy_is_minus_one() {
        let h = dual_hessian_formula(&[s(0.7)], &toy1(1.0)).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], -1.0, epsilon = 1e-12);
        let h = lagrangian_hessian(&toy1(1.0), &StackedPrimal::consensus(&s(0.0), 1));
        assert_eq!(h, Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0]));
    }

    #[test]
    fn dual_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [toy2(), random_quadratic(5, 3, 1)] {
            let (n, d) = (p.n(), p.dim());
            for _ in 0..20 {
                let lam = Vector::from_fn(n * d, |_, _| rng.random_range(-2.0..2.0));
                let g = stack(&dual_grad_formula(&unstack(&lam, d), &p).unwrap());
                let fd = try_finite_diff_grad(|l| dual_value(&unstack(l, d), &p), &lam, 1e-4).unwrap();
                assert!((&g - fd).amax() <= 1e-6);
            }
            let lam = Vector::from_fn(n * d, |_, _| rng.random_range(-2.0..2.0));
            let h = dual_hessian_formula(&unstack(&lam, d), &p).unwrap();
            let fd = finite_diff_jacobian(|l| Ok(stack(&dual_grad_formula(&unstack(l, d), &p)?)), &lam, 1e-4).unwrap();
            assert!((&h - fd).amax() <= 1e-5);
        }
    }

    #[test]
    fn approx_direction_examples() {
        let p = toy1(1.0);
        let dir = approx_dual_newton_dir(
            &StackedPrimal {
                x0: s(0.0),
                x: vec![s(2.0)],
            },
            &p,
        )
        .unwrap();
        assert_abs_diff_eq!(dir[0][0], 4.0, epsilon = 1e-15);
        let dir = approx_dual_newton_dir(&StackedPrimal::consensus(&s(3.0), 1), &p).unwrap();
        assert_eq!(dir[0][0], 0.0);
    }

    #[test]
    fn exact_newton_relation_on_random_quadratic() {
        let p = random_quadratic(3, 2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xt = StackedPrimal {
            x0: Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
            x: (0..3)
                .map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        };
        let rel = dual_newton_relation(&xt, &p).unwrap();
        assert!(rel.max_abs_diff() <= 1e-8, "{}", rel.max_abs_diff());
    }

    #[test]
    fn curvature_toy_and_large_mu() {
        let rep = curvature_check(&toy1(1.0), 3, 0).unwrap();
        assert!(rep.passed(), "{rep}");
        assert_abs_diff_eq!(rep.dual_observed.lo, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.dual_bounds.lo, 0.5, epsilon = 1e-15);
        let rep = curvature_check(&toy1(100.0), 3, 0).unwrap();
        assert!(rep.passed(), "{rep}");
        // one client with unit curvature: −∇²g = 1/μ, inside [1/(μ+1), 1/μ]
        assert_abs_diff_eq!(rep.dual_observed.hi, 0.01, epsilon = 1e-12);
        assert!(curvature_check(&toy1(1.0), 0, 0).is_err());
    }

    #[test]
    fn curvature_random_quadratic() {
        let rep = curvature_check(&random_quadratic(4, 3, 2), 10, 1).unwrap();
        assert!(rep.passed(), "{rep}");
    }

    fn monitor_run(p: &ProblemInstance, newton: usize, iters: usize, b_scale: f64) -> MonitorReport {
        let curv = p.curvatures().unwrap();
        let mut plan = safe_stepsizes(&curv, p.mu(), &kinds_first_newton(p.n(), newton)).unwrap();
        plan.b.iter_mut().for_each(|b| *b *= b_scale);
        let rates = rate_rho(&plan, &curv, p.mu()).unwrap();
        let trace = run(p, &plan, &Init::zeros(p.n(), p.dim()), &RunOptions::new(iters)).unwrap();
        let engine = MetricsEngine::new(p).unwrap();
        descent_monitors(&trace.snapshots, &plan, &rates, &engine).unwrap()
    }

    #[test]
    fn monitors_pass_on_toy() {
        for newton in 0..=2 {
            let rep = monitor_run(&toy2(), newton, 200, 1.0);
            assert!(rep.passed(), "{rep}");
            assert_eq!(rep.get(CONTRACTION).unwrap().checked, 200);
            assert_eq!(rep.records.len(), 201);
        }
    }

    #[test]
    fn monitors_pass_on_random_quadratic_mixed() {
        let rep = monitor_run(&random_quadratic(4, 3, 5), 2, 100, 1.0);
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn oversized_steps_still_give_well_formed_report() {
        let rep = monitor_run(&toy2(), 1, 50, 2.0);
        let text = rep.to_string();
        assert_eq!(rep.monitors.len(), 6);
        for m in &rep.monitors {
            assert!(text.contains(m.name));
        }
        assert!(!rep.get(STEPSIZE_CONSTANTS).unwrap().passed());
    }

    #[test]
    fn start_at_optimum_is_vacuous_pass() {
        let p = toy2();
        let cert = kkt_optimum(&p).unwrap();
        let curv = p.curvatures().unwrap();
        let plan = safe_stepsizes(&curv, 9.0, &kinds_first_newton(2, 1)).unwrap();
        let rates = rate_rho(&plan, &curv, 9.0).unwrap();
        let init = Init {
            x: vec![cert.omega.clone(); 2],
            lambda: cert.lambda.clone(),
        };
        let trace = run(&p, &plan, &init, &RunOptions::new(5)).unwrap();
        let engine = MetricsEngine::new(&p).unwrap();
        let rep = descent_monitors(&trace.snapshots, &plan, &rates, &engine).unwrap();
        assert!(rep.passed(), "{rep}");
        assert_eq!(rep.slack, 0.0);
    }

    #[test]
    fn reduced_hessian_matches_finite_differences() {
        let p = random_quadratic(3, 2, 4);
        let x = vec![Vector::zeros(2); 3];
        let lam = vec![Vector::zeros(2); 3];
        let h = reduced_hessian(&p, &x);
        let flat = stack(&x);
        let fd = finite_diff_jacobian(
            |v| Ok(stack(&crate::metrics::reduced_gradient(&p, &unstack(v, 2), &lam)?)),
            &flat,
            1e-5,
        )
        .unwrap();
        assert!((&h - fd).amax() <= 1e-7);
        let g = finite_diff_grad(
            |v| crate::metrics::reduced_lagrangian(&p, &unstack(v, 2), &lam).unwrap(),
            &flat,
            1e-5,
        );
        let exact = stack(&crate::metrics::reduced_gradient(&p, &x, &lam).unwrap());
        assert!((g - exact).amax() <= 1e-7);
    }
}
