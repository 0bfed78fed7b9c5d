//! In-process server/client simulation: client and server state, the structured
//! action of the star-graph incidence matrix `W`, and one synchronous round.
//!
//! `W = (𝟙_n, −I_n) ⊗ I_d` is never formed. `W x̃` has client block `x_0 − x_i`
//! and `Wᵀλ` has server block `Σ λ_i` and client blocks `−λ_i`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Objective;
use crate::numerics::Vector;

/// Environment variable holding the worker-thread count for client updates.
pub const THREADS_ENV: &str = "FEDHYBRID_THREADS";

/// Bytes per transmitted real.
pub const BYTES_PER_REAL: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UpdateKind {
    Gradient,
    Newton,
}

#[derive(Clone, Debug)]
pub struct ClientState {
    /// Position in the server's reduction order.
    pub id: usize,
    pub x: Vector,
    pub lambda: Vector,
    pub kind: UpdateKind,
    pub a: f64,
    pub b: f64,
    pub objective: Arc<dyn Objective>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub x0: Vector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundLog {
    pub round: usize,
    pub broadcasts: usize,
    pub uploads: usize,
    /// One `d`-vector delivered to each client.
    pub downlink_bytes: u64,
    /// `x_i` and `λ_i` from each client.
    pub uplink_bytes: u64,
}

/// Server and client primal blocks `x̃ = (x_0, x_1, …, x_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedPrimal {
    pub x0: Vector,
    pub x: Vec<Vector>,
}

impl StackedPrimal {
    pub fn consensus(omega: &Vector, n: usize) -> Self {
        Self {
            x0: omega.clone(),
            x: vec![omega.clone(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `W x̃`: client block `i` is `x_0 − x_i`.
    pub fn w_apply(&self) -> Vec<Vector> {
        self.x.iter().map(|xi| &self.x0 - xi).collect()
    }

    /// Flattened `(x_0, x_1, …, x_n)`.
    pub fn flatten(&self) -> Vector {
        let d = self.dim();
        let mut out = Vector::zeros(d * (self.n() + 1));
        out.rows_mut(0, d).copy_from(&self.x0);
        for (i, xi) in self.x.iter().enumerate() {
            out.rows_mut(d * (i + 1), d).copy_from(xi);
        }
        out
    }

    pub fn unflatten(v: &Vector, n: usize, d: usize) -> Result<Self> {
        if v.len() != d * (n + 1) {
            return Err(Error::DimensionMismatch {
                expected: d * (n + 1),
                found: v.len(),
            });
        }
        Ok(Self {
            x0: v.rows(0, d).into_owned(),
            x: (0..n).map(|i| v.rows(d * (i + 1), d).into_owned()).collect(),
        })
    }
}

/// `Wᵀ λ`: server block `Σ λ_i`, client blocks `−λ_i`.
pub fn w_transpose(lambda: &[Vector]) -> StackedPrimal {
    let d = lambda.first().map_or(0, Vector::len);
    StackedPrimal {
        x0: lambda.iter().fold(Vector::zeros(d), |acc, l| acc + l),
        x: lambda.iter().map(|l| -l).collect(),
    }
}

/// Squared norm of a block vector.
pub fn blocks_norm_squared(blocks: &[Vector]) -> f64 {
    blocks.iter().map(Vector::norm_squared).sum()
}

pub fn blocks_dot(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u.dot(v)).sum()
}

/// Penalized average `(1/n) Σ x_i − (1/(μ n)) Σ λ_i`, summed in slice order.
pub fn consensus_point(x: &[Vector], lambda: &[Vector], mu: f64) -> Vector {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vector::len);
    let sx = x.iter().fold(Vector::zeros(d), |acc, v| acc + v);
    let sl = lambda.iter().fold(Vector::zeros(d), |acc, v| acc + v);
    sx / n - sl / (mu * n)
}

/// Server consensus step. Sums run in ascending client id, so the result does
/// not depend on how the client list is ordered.
pub fn consensus_update(clients: &[ClientState], mu: f64) -> Vector {
    let mut order: Vec<&ClientState> = clients.iter().collect();
    order.sort_by_key(|c| c.id);
    let x: Vec<Vector> = order.iter().map(|c| c.x.clone()).collect();
    let lambda: Vec<Vector> = order.iter().map(|c| c.lambda.clone()).collect();
    consensus_point(&x, &lambda, mu)
}

/// Runs per-client work either inline or on a dedicated rayon pool.
/// Output order always matches input order.
#[derive(Clone, Debug, Default)]
pub enum Executor {
    #[default]
    Sequential,
    Pool(Arc<rayon::ThreadPool>),
}

impl Executor {
    pub fn with_threads(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Executor::Sequential);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Executor::Pool(Arc::new(pool)))
    }

    /// Reads [`THREADS_ENV`]; unset means sequential.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let t: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a thread count")))?;
                Self::with_threads(t)
            }
            Err(_) => Ok(Executor::Sequential),
        }
    }

    pub fn threads(&self) -> usize {
        match self {
            Executor::Sequential => 1,
            Executor::Pool(p) => p.current_num_threads(),
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            Executor::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            Executor::Pool(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()),
        }
    }
}

/// One synchronous round: broadcast `x_0`, update every client independently,
/// then recompute `x_0` from the updated clients.
pub fn run_round<F>(
    round: usize,
    server: &ServerState,
    clients: &[ClientState],
    step: F,
    mu: f64,
    exec: &Executor,
) -> Result<(ServerState, Vec<ClientState>, RoundLog)>
where
    F: Fn(&ClientState, &Vector, f64) -> Result<ClientState> + Sync + Send,
{
    if clients.is_empty() {
        return Err(Error::InvalidArgument("round needs at least one client".into()));
    }
    let x0 = &server.x0;
    let updated = exec
        .map(clients, |_, c| step(c, x0, mu).map_err(|e| (c.id, e)))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|(index, e)| Error::Client {
            index,
            source: Box::new(e),
        })?;
    let next = ServerState {
        x0: consensus_update(&updated, mu),
    };
    let n = clients.len() as u64;
    let d = x0.len() as u64;
    let log = RoundLog {
        round,
        broadcasts: 1,
        uploads: clients.len(),
        downlink_bytes: n * d * BYTES_PER_REAL,
        uplink_bytes: 2 * n * d * BYTES_PER_REAL,
    };
    Ok((next, updated, log))
}
