//! Hybrid primal-dual client updates, the safe stepsize rule and the training loop.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::model::{Curvature, ProblemInstance};
use crate::numerics::{Matrix, SpdFactor, Vector};
use crate::simnet::{consensus_update, run_round, ClientState, Executor, ServerState, StackedPrimal, UpdateKind};

/// `r = ∇f_i(x_i) − λ_i + μ(x_i − x_0)`.
fn residual(state: &ClientState, x0: &Vector, mu: f64) -> Vector {
    state.objective.gradient(&state.x) - &state.lambda + (&state.x - x0) * mu
}

/// `x_i ← x_i − a r`, `λ_i ← λ_i + b (x_0 − x_i)`, both from the pre-update `x_i`.
pub fn gradient_client_step(state: &ClientState, x0: &Vector, mu: f64) -> ClientState {
    let r = residual(state, x0, mu);
    let gap = x0 - &state.x;
    ClientState {
        x: &state.x - r * state.a,
        lambda: &state.lambda + gap * state.b,
        ..state.clone()
    }
}

/// `x_i ← x_i − a H⁻¹ r`, `λ_i ← λ_i + b H (x_0 − x_i)` with `H = ∇²f_i(x_i) + μI`.
pub fn newton_client_step(state: &ClientState, x0: &Vector, mu: f64) -> Result<ClientState> {
    let d = state.x.len();
    let h = state.objective.hessian(&state.x) + Matrix::identity(d, d) * mu;
    let r = residual(state, x0, mu);
    let dir = SpdFactor::new(&h)?.solve(&r)?;
    let gap = x0 - &state.x;
    Ok(ClientState {
        x: &state.x - dir * state.a,
        lambda: &state.lambda + (h * gap) * state.b,
        ..state.clone()
    })
}

pub fn client_step(state: &ClientState, x0: &Vector, mu: f64) -> Result<ClientState> {
    match state.kind {
        UpdateKind::Gradient => Ok(gradient_client_step(state, x0, mu)),
        UpdateKind::Newton => newton_client_step(state, x0, mu),
    }
}

/// First `newton` clients take Newton-type steps, the rest gradient-type.
pub fn kinds_first_newton(n: usize, newton: usize) -> Vec<UpdateKind> {
    (0..n)
        .map(|i| {
            if i < newton {
                UpdateKind::Newton
            } else {
                UpdateKind::Gradient
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepsizeMode {
    /// Set at the largest values the convergence guarantee allows.
    Auto,
    Manual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepsizePlan {
    pub kinds: Vec<UpdateKind>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mode: StepsizeMode,
}

impl StepsizePlan {
    pub fn manual(kinds: Vec<UpdateKind>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = kinds.len();
        for len in [a.len(), b.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if let Some(bad) = a.iter().chain(&b).find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("stepsizes must be positive, got {bad}")));
        }
        Ok(Self {
            kinds,
            a,
            b,
            mode: StepsizeMode::Manual,
        })
    }

    /// Same `(a, b)` for all gradient clients and another pair for all Newton clients.
    pub fn per_kind(kinds: Vec<UpdateKind>, gradient: (f64, f64), newton: (f64, f64)) -> Result<Self> {
        let pick = |k: &UpdateKind| match k {
            UpdateKind::Gradient => gradient,
            UpdateKind::Newton => newton,
        };
        let a = kinds.iter().map(|k| pick(k).0).collect();
        let b = kinds.iter().map(|k| pick(k).1).collect();
        Self::manual(kinds, a, b)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

fn global(curv: &[Curvature]) -> Result<Curvature> {
    if curv.is_empty() {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    if let Some(c) = curv.iter().find(|c| !(c.m > 0.0)) {
        return Err(Error::NotStronglyConvex { m: c.m, l: c.l });
    }
    Ok(Curvature {
        m: curv.iter().map(|c| c.m).fold(f64::INFINITY, f64::min),
        l: curv.iter().map(|c| c.l).fold(f64::NEG_INFINITY, f64::max),
    })
}

fn alpha_lower(plan: &StepsizePlan, curv: &[Curvature], mu: f64) -> f64 {
    plan.kinds
        .iter()
        .zip(&plan.a)
        .zip(curv)
        .map(|((k, a), c)| match k {
            UpdateKind::Gradient => *a,
            UpdateKind::Newton => a / (c.l + mu),
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest stepsizes covered by the linear convergence guarantee.
pub fn safe_stepsizes(curv: &[Curvature], mu: f64, kinds: &[UpdateKind]) -> Result<StepsizePlan> {
    if curv.len() != kinds.len() {
        return Err(Error::DimensionMismatch {
            expected: curv.len(),
            found: kinds.len(),
        });
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("penalty mu must be positive, got {mu}")));
    }
    let g = global(curv)?;
    let denom = 22.0 * mu / 9.0 + 2.0 * g.l;
    let a: Vec<f64> = kinds
        .iter()
        .zip(curv)
        .map(|(k, c)| match k {
            UpdateKind::Gradient => 1.0 / denom,
            UpdateKind::Newton => (c.m + mu) / denom,
        })
        .collect();
    let mut plan = StepsizePlan {
        kinds: kinds.to_vec(),
        b: vec![0.0; a.len()],
        a,
        mode: StepsizeMode::Auto,
    };
    let alpha = alpha_lower(&plan, curv, mu);
    let cap = (mu / 9.0).min(alpha * g.m * g.m / 21.0);
    plan.b = kinds
        .iter()
        .zip(curv)
        .map(|(k, c)| match k {
            UpdateKind::Gradient => cap,
            UpdateKind::Newton => cap / (c.l + mu),
        })
        .collect();
    Ok(plan)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateConstants {
    pub m: f64,
    pub l: f64,
    /// Strong concavity of the dual, `1/(μ+ℓ)`.
    pub m_g: f64,
    /// Smoothness of the dual, `1/μ`.
    pub l_g: f64,
    /// Smoothness of `L̃` in `x̃`, `ℓ+μ`.
    pub l_l: f64,
    pub alpha_lo: f64,
    pub beta_lo: f64,
    pub beta: f64,
    pub kappa: f64,
    /// `min{3β̲/(13(μ+ℓ)), mα̲/2}`, used for certificates.
    pub rho: f64,
    /// `min{3β̲/(13(m+μ)), mα̲/2}`.
    pub rho_statement: f64,
}

pub fn rate_rho(plan: &StepsizePlan, curv: &[Curvature], mu: f64) -> Result<RateConstants> {
    if curv.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            found: curv.len(),
        });
    }
    let g = global(curv)?;
    let alpha_lo = alpha_lower(plan, curv, mu);
    let scaled = |pick_l: bool| {
        plan.kinds
            .iter()
            .zip(&plan.b)
            .zip(curv)
            .map(move |((k, b), c)| match k {
                UpdateKind::Gradient => *b,
                UpdateKind::Newton => b * (if pick_l { c.l } else { c.m } + mu),
            })
    };
    let beta_lo = scaled(false).fold(f64::INFINITY, f64::min);
    let beta = scaled(true).fold(f64::NEG_INFINITY, f64::max);
    let kappa = 3.0 + 2.0 * beta * beta / (mu * mu) + beta / mu;
    Ok(RateConstants {
        m: g.m,
        l: g.l,
        m_g: 1.0 / (mu + g.l),
        l_g: 1.0 / mu,
        l_l: g.l + mu,
        alpha_lo,
        beta_lo,
        beta,
        kappa,
        rho: (3.0 * beta_lo / (13.0 * (mu + g.l))).min(g.m * alpha_lo / 2.0),
        rho_statement: (3.0 * beta_lo / (13.0 * g.m + 13.0 * mu)).min(g.m * alpha_lo / 2.0),
    })
}

/// Starting client iterates; `x_0` is derived by the consensus step.
#[derive(Clone, Debug, PartialEq)]
pub struct Init {
    pub x: Vec<Vector>,
    pub lambda: Vec<Vector>,
}

impl Init {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            x: vec![Vector::zeros(d); n],
            lambda: vec![Vector::zeros(d); n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub iters: usize,
    /// Snapshot every `cadence` rounds, plus the initial and final state.
    pub cadence: usize,
    pub executor: Executor,
}

impl RunOptions {
    pub fn new(iters: usize) -> Self {
        Self {
            iters,
            cadence: 1,
            executor: Executor::Sequential,
        }
    }

    pub fn cadence(mut self, cadence: usize) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn executor(mut self, executor: Executor) -> Self {
        self.executor = executor;
        self
    }
}

/// Iterate after `k` rounds with cumulative traffic.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub x0: Vector,
    pub x: Vec<Vector>,
    pub lambda: Vec<Vector>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

impl Snapshot {
    pub fn primal(&self) -> StackedPrimal {
        StackedPrimal {
            x0: self.x0.clone(),
            x: self.x.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub snapshots: Vec<Snapshot>,
}

impl Trace {
    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

fn snapshot(k: usize, server: &ServerState, clients: &[ClientState], up: u64, down: u64) -> Snapshot {
    Snapshot {
        k,
        x0: server.x0.clone(),
        x: clients.iter().map(|c| c.x.clone()).collect(),
        lambda: clients.iter().map(|c| c.lambda.clone()).collect(),
        uplink_bytes: up,
        downlink_bytes: down,
    }
}

/// Runs `opts.iters` rounds, handing each snapshot to `hook`. Returns the last
/// state reached; `hook` may stop the run early with `ControlFlow::Break`.
pub fn run_with<H>(
    problem: &ProblemInstance,
    plan: &StepsizePlan,
    init: &Init,
    opts: &RunOptions,
    mut hook: H,
) -> Result<Snapshot>
where
    H: FnMut(&Snapshot) -> Result<ControlFlow<()>>,
{
    let (n, d, mu) = (problem.n(), problem.dim(), problem.mu());
    if opts.iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    if opts.cadence == 0 {
        return Err(Error::InvalidArgument("snapshot cadence must be at least 1".into()));
    }
    for len in [plan.len(), init.x.len(), init.lambda.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    for v in init.x.iter().chain(&init.lambda) {
        crate::numerics::ensure_len(v, d)?;
    }
    let mut clients: Vec<ClientState> = (0..n)
        .map(|i| ClientState {
            id: i,
            x: init.x[i].clone(),
            lambda: init.lambda[i].clone(),
            kind: plan.kinds[i],
            a: plan.a[i],
            b: plan.b[i],
            objective: problem.objectives()[i].clone(),
        })
        .collect();
    let mut server = ServerState {
        x0: consensus_update(&clients, mu),
    };
    let (mut up, mut down) = (0u64, 0u64);
    let mut last = snapshot(0, &server, &clients, 0, 0);
    if hook(&last)?.is_break() {
        return Ok(last);
    }
    for k in 1..=opts.iters {
        let (s, c, log) = run_round(k, &server, &clients, client_step, mu, &opts.executor)?;
        server = s;
        clients = c;
        up += log.uplink_bytes;
        down += log.downlink_bytes;
        if k % opts.cadence == 0 || k == opts.iters {
            last = snapshot(k, &server, &clients, up, down);
            if hook(&last)?.is_break() {
                return Ok(last);
            }
        }
    }
    if last.k != opts.iters {
        last = snapshot(opts.iters, &server, &clients, up, down);
    }
    Ok(last)
}

/// Runs the method and keeps every snapshot.
pub fn run(problem: &ProblemInstance, plan: &StepsizePlan, init: &Init, opts: &RunOptions) -> Result<Trace> {
    let mut trace = Trace::default();
    run_with(problem, plan, init, opts, |s| {
        trace.snapshots.push(s.clone());
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(trace)
}
