//! Exact evaluation of the augmented Lagrangian, the dual function and the
//! tracking errors used to measure convergence.
//!
//! The inner problem `min_x̃ L̃(x̃, λ)` is solved by Newton's method on the full
//! `(n+1)d` system, eliminating the client blocks so each step needs only
//! per-client `d × d` factorizations and one `d × d` Schur complement. For
//! all-quadratic problems the factorizations are computed once and reused.

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::numerics::{ensure_len, Matrix, SpdFactor, Vector};
use crate::simnet::{blocks_norm_squared, StackedPrimal};

/// Relative stationarity tolerance for inner and centralized solves.
pub const INNER_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERS: usize = 100;

fn check_blocks(blocks: &[Vector], n: usize, d: usize) -> Result<()> {
    if blocks.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: blocks.len(),
        });
    }
    blocks.iter().try_for_each(|b| ensure_len(b, d))
}

fn check_point(problem: &ProblemInstance, xt: &StackedPrimal, lambda: &[Vector]) -> Result<()> {
    let (n, d) = (problem.n(), problem.dim());
    ensure_len(&xt.x0, d)?;
    check_blocks(&xt.x, n, d)?;
    check_blocks(lambda, n, d)
}

/// `L̃(x̃, λ) = Σ f_i(x_i) + Σ λ_iᵀ(x_0 − x_i) + (μ/2) Σ ‖x_0 − x_i‖²`.
///
/// `mu` is explicit so the plain Lagrangian (`mu = 0`) can be evaluated too.
pub fn aug_lagrangian(problem: &ProblemInstance, xt: &StackedPrimal, lambda: &[Vector], mu: f64) -> Result<f64> {
    check_point(problem, xt, lambda)?;
    let mut total = 0.0;
    for ((obj, xi), li) in problem.objectives().iter().zip(&xt.x).zip(lambda) {
        let gap = &xt.x0 - xi;
        total += obj.value(xi) + li.dot(&gap) + 0.5 * mu * gap.norm_squared();
    }
    Ok(total)
}

/// `∇_x̃ L̃(x̃, λ)` as server and client blocks.
pub fn aug_lagrangian_gradient(problem: &ProblemInstance, xt: &StackedPrimal, lambda: &[Vector]) -> StackedPrimal {
    let mu = problem.mu();
    let d = problem.dim();
    let mut g0 = Vector::zeros(d);
    let mut gx = Vec::with_capacity(problem.n());
    for ((obj, xi), li) in problem.objectives().iter().zip(&xt.x).zip(lambda) {
        let gap = &xt.x0 - xi;
        g0 += li + &gap * mu;
        gx.push(obj.gradient(xi) - li - gap * mu);
    }
    StackedPrimal { x0: g0, x: gx }
}

fn block_mean(blocks: &[Vector]) -> Vector {
    let d = blocks.first().map_or(0, Vector::len);
    blocks.iter().fold(Vector::zeros(d), |acc, b| acc + b) / blocks.len() as f64
}

/// `L(x, λ) = f(x) − λᵀMx + (μ/2) xᵀMx − (1/(2μ)) λᵀZλ`, the augmented Lagrangian
/// with `x_0` eliminated by the consensus step. `Z` averages blocks, `M = I − Z`.
pub fn reduced_lagrangian(problem: &ProblemInstance, x: &[Vector], lambda: &[Vector]) -> Result<f64> {
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    check_blocks(x, n, d)?;
    check_blocks(lambda, n, d)?;
    let xbar = block_mean(x);
    let lbar = block_mean(lambda);
    let mut value = problem.separable_value(x);
    for (xi, li) in x.iter().zip(lambda) {
        let centered = xi - &xbar;
        value += -li.dot(&centered) + 0.5 * mu * centered.norm_squared();
    }
    value -= n as f64 * lbar.norm_squared() / (2.0 * mu);
    Ok(value)
}

/// `∇_x L(x, λ) = ∇f(x) − Mλ + μ M x`, blockwise.
pub fn reduced_gradient(problem: &ProblemInstance, x: &[Vector], lambda: &[Vector]) -> Result<Vec<Vector>> {
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    check_blocks(x, n, d)?;
    check_blocks(lambda, n, d)?;
    let xbar = block_mean(x);
    let lbar = block_mean(lambda);
    Ok(problem
        .objectives()
        .iter()
        .zip(x)
        .zip(lambda)
        .map(|((obj, xi), li)| obj.gradient(xi) - (li - &lbar) + (xi - &xbar) * mu)
        .collect())
}

/// Factorizations for one Newton step on `L̃(·, λ)`.
struct BlockSystem {
    clients: Vec<SpdFactor>,
    schur: SpdFactor,
}

impl BlockSystem {
    /// Client blocks `K_i = ∇²f_i(x_i) + μI`; server Schur complement `μnI − μ² Σ K_i⁻¹`.
    fn new(problem: &ProblemInstance, x: &[Vector]) -> Result<Self> {
        let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
        let mut clients = Vec::with_capacity(n);
        let mut inv_sum = Matrix::zeros(d, d);
        for (obj, xi) in problem.objectives().iter().zip(x) {
            let k = obj.hessian(xi) + Matrix::identity(d, d) * mu;
            let f = SpdFactor::new(&k)?;
            inv_sum += f.inverse();
            clients.push(f);
        }
        let schur = Matrix::identity(d, d) * (mu * n as f64) - inv_sum * (mu * mu);
        let schur = SpdFactor::new(&crate::numerics::symmetrize(&schur))?;
        Ok(Self { clients, schur })
    }

    /// Solves `∇²L̃ · δ = −g`.
    fn newton_direction(&self, grad: &StackedPrimal, mu: f64) -> Result<StackedPrimal> {
        let d = grad.dim();
        let kinv_g: Vec<Vector> = self
            .clients
            .iter()
            .zip(&grad.x)
            .map(|(f, gi)| f.solve(gi))
            .collect::<Result<_>>()?;
        let rhs = kinv_g.iter().fold(-&grad.x0, |acc, v| acc - v * mu);
        let delta0 = self.schur.solve(&rhs)?;
        let delta = self
            .clients
            .iter()
            .zip(&grad.x)
            .map(|(f, gi)| f.solve(&(&delta0 * mu - gi)))
            .collect::<Result<Vec<_>>>()?;
        debug_assert_eq!(delta0.len(), d);
        Ok(StackedPrimal { x0: delta0, x: delta })
    }
}

fn stationarity_scale(problem: &ProblemInstance, xt: &StackedPrimal, lambda: &[Vector]) -> f64 {
    let grads: f64 = problem
        .objectives()
        .iter()
        .zip(&xt.x)
        .map(|(o, xi)| o.gradient(xi).norm_squared())
        .sum();
    1.0 + grads.sqrt() + blocks_norm_squared(lambda).sqrt()
}

fn grad_norm(g: &StackedPrimal) -> f64 {
    (g.x0.norm_squared() + blocks_norm_squared(&g.x)).sqrt()
}

fn axpy(xt: &StackedPrimal, step: f64, dir: &StackedPrimal) -> StackedPrimal {
    StackedPrimal {
        x0: &xt.x0 + &dir.x0 * step,
        x: xt.x.iter().zip(&dir.x).map(|(a, b)| a + b * step).collect(),
    }
}

/// Minimizer of `L̃(·, λ)`, with factorizations cached for quadratic problems.
pub struct InnerSolver<'a> {
    problem: &'a ProblemInstance,
    cached: Option<BlockSystem>,
}

impl<'a> InnerSolver<'a> {
    pub fn new(problem: &'a ProblemInstance) -> Result<Self> {
        let cached = if problem.all_quadratic() {
            let zeros = vec![Vector::zeros(problem.dim()); problem.n()];
            Some(BlockSystem::new(problem, &zeros)?)
        } else {
            None
        };
        Ok(Self { problem, cached })
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.problem
    }

    /// `x̃*(λ)`, starting Newton from `warm` when given.
    pub fn solve(&self, lambda: &[Vector], warm: Option<&StackedPrimal>) -> Result<StackedPrimal> {
        let (n, d, mu) = (self.problem.n(), self.problem.dim(), self.problem.mu());
        check_blocks(lambda, n, d)?;
        let mut xt = match warm {
            Some(w) => {
                ensure_len(&w.x0, d)?;
                check_blocks(&w.x, n, d)?;
                w.clone()
            }
            None => StackedPrimal::consensus(&Vector::zeros(d), n),
        };
        let mut grad = aug_lagrangian_gradient(self.problem, &xt, lambda);
        let mut norm = grad_norm(&grad);
        let mut stalled = 0;
        for _ in 0..MAX_NEWTON_ITERS {
            let tol = INNER_TOL * stationarity_scale(self.problem, &xt, lambda);
            if norm <= tol {
                return Ok(xt);
            }
            let fresh;
            let system = match &self.cached {
                Some(s) => s,
                None => {
                    fresh = BlockSystem::new(self.problem, &xt.x)?;
                    &fresh
                }
            };
            let dir = system.newton_direction(&grad, mu)?;
            let (next, next_grad, next_norm) = self.damped_step(&xt, lambda, &dir, norm)?;
            if next_norm >= norm {
                stalled += 1;
                // rounding floor: accept once the residual is within 1e3 of the tolerance
                if stalled >= 3 && norm <= 1e3 * tol {
                    return Ok(xt);
                }
            } else {
                stalled = 0;
            }
            if next_norm <= norm || self.cached.is_none() {
                xt = next;
                grad = next_grad;
                norm = next_norm;
            }
        }
        let tol = INNER_TOL * stationarity_scale(self.problem, &xt, lambda);
        if norm <= 1e3 * tol {
            return Ok(xt);
        }
        Err(Error::InnerSolveFailure {
            grad_norm: norm,
            iters: MAX_NEWTON_ITERS,
        })
    }

    /// Full Newton step if it reduces the gradient norm or satisfies Armijo;
    /// otherwise backtracks on `L̃`.
    fn damped_step(
        &self,
        xt: &StackedPrimal,
        lambda: &[Vector],
        dir: &StackedPrimal,
        norm: f64,
    ) -> Result<(StackedPrimal, StackedPrimal, f64)> {
        let mu = self.problem.mu();
        let f0 = aug_lagrangian(self.problem, xt, lambda, mu)?;
        let g0 = aug_lagrangian_gradient(self.problem, xt, lambda);
        let slope = g0.x0.dot(&dir.x0) + dir.x.iter().zip(&g0.x).map(|(a, b)| a.dot(b)).sum::<f64>();
        let mut t = 1.0;
        loop {
            let cand = axpy(xt, t, dir);
            let cg = aug_lagrangian_gradient(self.problem, &cand, lambda);
            let cn = grad_norm(&cg);
            if cn < norm || t < 1e-12 {
                return Ok((cand, cg, cn));
            }
            let fc = aug_lagrangian(self.problem, &cand, lambda, mu)?;
            if fc <= f0 + 1e-4 * t * slope {
                return Ok((cand, cg, cn));
            }
            t *= 0.5;
        }
    }

    pub fn dual_value(&self, lambda: &[Vector], warm: Option<&StackedPrimal>) -> Result<(f64, StackedPrimal)> {
        let xs = self.solve(lambda, warm)?;
        let g = aug_lagrangian(self.problem, &xs, lambda, self.problem.mu())?;
        Ok((g, xs))
    }
}

/// `x̃*(λ) = argmin_x̃ L̃(x̃, λ)`.
pub fn inner_argmin(lambda: &[Vector], problem: &ProblemInstance) -> Result<StackedPrimal> {
    InnerSolver::new(problem)?.solve(lambda, None)
}

/// `g(λ) = min_x̃ L̃(x̃, λ)`.
pub fn dual_value(lambda: &[Vector], problem: &ProblemInstance) -> Result<f64> {
    Ok(InnerSolver::new(problem)?.dual_value(lambda, None)?.0)
}

/// Centralized optimum `ω*` with the matching multipliers `λ_i* = ∇f_i(ω*)`.
#[derive(Clone, Debug)]
pub struct OptimumCertificate {
    pub omega: Vector,
    pub lambda: Vec<Vector>,
    pub f_star: f64,
    /// `‖Σ ∇f_i(ω*)‖`.
    pub residual: f64,
}

impl OptimumCertificate {
    pub fn primal(&self) -> StackedPrimal {
        StackedPrimal::consensus(&self.omega, self.lambda.len())
    }
}

/// Damped Newton on `Σ f_i`, from the origin.
pub fn kkt_optimum(problem: &ProblemInstance) -> Result<OptimumCertificate> {
    problem.curvatures()?;
    let d = problem.dim();
    let total = |w: &Vector| problem.total_value(w);
    let mut omega = Vector::zeros(d);
    let mut grad = problem.total_gradient(&omega);
    let mut stalled = 0;
    for _ in 0..MAX_NEWTON_ITERS {
        let scale: f64 = 1.0
            + problem
                .objectives()
                .iter()
                .map(|o| o.gradient(&omega).norm())
                .sum::<f64>();
        let norm = grad.norm();
        if norm <= INNER_TOL * scale || (stalled >= 3 && norm <= 1e3 * INNER_TOL * scale) {
            let lambda = problem.objectives().iter().map(|o| o.gradient(&omega)).collect();
            return Ok(OptimumCertificate {
                f_star: total(&omega),
                residual: norm,
                omega,
                lambda,
            });
        }
        let dir = -SpdFactor::new(&problem.total_hessian(&omega))?.solve(&grad)?;
        let f0 = total(&omega);
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let (next, next_grad) = loop {
            let cand = &omega + &dir * t;
            let cg = problem.total_gradient(&cand);
            if cg.norm() < norm || total(&cand) <= f0 + 1e-4 * t * slope || t < 1e-12 {
                break (cand, cg);
            }
            t *= 0.5;
        };
        if next_grad.norm() >= norm {
            stalled += 1;
        } else {
            stalled = 0;
        }
        omega = next;
        grad = next_grad;
    }
    Err(Error::SolverFailure {
        grad_norm: grad.norm(),
        iters: MAX_NEWTON_ITERS,
    })
}

/// One row of a convergence trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    /// `g(λ*) − g(λ^k)`; absent for methods without a dual iterate.
    pub delta_lambda: Option<f64>,
    /// `L̃(x̃^k, λ^k) − g(λ^k)`.
    pub delta_x: Option<f64>,
    /// `13 Δ_λ + Δ_x`.
    pub delta: Option<f64>,
    /// `‖W x̃^k‖`.
    pub consensus_err: f64,
    pub primal_grad_norm: f64,
    /// `Σ f_i(x_0^k) − f*`.
    pub fun_gap: f64,
    pub elapsed_ms: Option<f64>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

/// Weight on the dual gap in the combined error.
pub const DUAL_GAP_WEIGHT: f64 = 13.0;

/// Evaluates tracking errors along a trajectory, reusing the inner solver.
pub struct MetricsEngine<'a> {
    solver: InnerSolver<'a>,
    cert: OptimumCertificate,
}

impl<'a> MetricsEngine<'a> {
    pub fn new(problem: &'a ProblemInstance) -> Result<Self> {
        let cert = kkt_optimum(problem)?;
        Self::with_certificate(problem, cert)
    }

    pub fn with_certificate(problem: &'a ProblemInstance, cert: OptimumCertificate) -> Result<Self> {
        Ok(Self {
            solver: InnerSolver::new(problem)?,
            cert,
        })
    }

    pub fn certificate(&self) -> &OptimumCertificate {
        &self.cert
    }

    pub fn solver(&self) -> &InnerSolver<'a> {
        &self.solver
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.solver.problem
    }

    /// Full record for a primal-dual iterate. The inner solve is warm-started at `x̃^k`.
    pub fn record(&self, k: usize, xt: &StackedPrimal, lambda: &[Vector]) -> Result<IterateRecord> {
        let problem = self.solver.problem;
        check_point(problem, xt, lambda)?;
        let (g, _) = self.solver.dual_value(lambda, Some(xt))?;
        let l = aug_lagrangian(problem, xt, lambda, problem.mu())?;
        let delta_x = l - g;
        let delta_lambda = self.cert.f_star - g;
        let grad = aug_lagrangian_gradient(problem, xt, lambda);
        Ok(IterateRecord {
            k,
            delta_lambda: Some(delta_lambda),
            delta_x: Some(delta_x),
            delta: Some(DUAL_GAP_WEIGHT * delta_lambda + delta_x),
            consensus_err: blocks_norm_squared(&xt.w_apply()).sqrt(),
            primal_grad_norm: blocks_norm_squared(&grad.x).sqrt(),
            fun_gap: problem.total_value(&xt.x0) - self.cert.f_star,
            ..Default::default()
        })
    }

    /// Record for a primal-only method whose iterate is the consensus point `ω`.
    pub fn primal_only_record(&self, k: usize, omega: &Vector) -> IterateRecord {
        let problem = self.solver.problem;
        IterateRecord {
            k,
            primal_grad_norm: problem.total_gradient(omega).norm(),
            fun_gap: problem.total_value(omega) - self.cert.f_star,
            ..Default::default()
        }
    }
}

/// `Δ_x`, `Δ_λ` and `Δ = 13Δ_λ + Δ_x` at `(x̃^k, λ^k)`.
pub fn tracking_errors(
    xt: &StackedPrimal,
    lambda: &[Vector],
    cert: &OptimumCertificate,
    problem: &ProblemInstance,
) -> Result<IterateRecord> {
    MetricsEngine::with_certificate(problem, cert.clone())?.record(0, xt, lambda)
}
