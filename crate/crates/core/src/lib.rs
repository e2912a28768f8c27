//! Inertial first-order methods on parametric smooth problems, with forward
//! propagation of the parameter derivative through the iteration.
//!
//! The iteration runs on the lifted state `X_k = (x_k, x_{k−1})`:
//!
//! ```text
//! y_a = x + a_k (x − z)
//! y_b = x + b_k (x − z)
//! X_{k+1} = (y_a − γ_k ∇ₓ f(y_b, θ), x)
//! ```
//!
//! [`deriv`] carries `∂θX_k` alongside and compares it with the
//! fixed-point derivative, and [`analysis`] measures convergence rates
//! against the spectral radius of the limit Jacobian.

pub mod analysis;
pub mod cli;
pub mod deriv;
pub mod error;
pub mod fd;
pub mod problem;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
