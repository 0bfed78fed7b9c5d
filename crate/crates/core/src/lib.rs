//! Hybrid primal-dual consensus optimization over a simulated federation.
//!
//! Clients hold local objectives and take gradient-type or Newton-type
//! primal-dual steps; the server forms a consensus point each round.
//!
//! Randomness comes from ChaCha8 streams seeded per run: stream 0 drives shared
//! draws and stream `i + 1` drives client `i`, so generated data does not
//! depend on thread count or evaluation order.

// Negated float comparisons deliberately reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hybrid;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod reference;
pub mod simnet;
pub mod theory;

pub use error::{Error, Result};
pub use numerics::{Matrix, Vector};
