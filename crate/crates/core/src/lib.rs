//! Core numerics for solving control co-design problems through the
//! Hamilton-Jacobi-Bellman equation with a physics-informed value network.
//!
//! The crate is `no_std` (with `alloc`) so the math stays free of I/O and
//! platform concerns; the companion `uccd` crate adds the training driver,
//! Monte-Carlo validation, file formats, and the command line.
//!
//! Module map:
//! - [`autodiff`]: scalar tape and lane-batched evaluator with reverse-mode
//!   gradients, forward-over-reverse Hessian-vector products, and the mixed
//!   second/third-order sweeps the residual gradients need.
//! - [`network`]: the fully connected value-function approximator.
//! - [`optimizer`]: Adam, used for both network weights and design updates.
//! - [`problem`]: the problem-definition interface plus the two built-in
//!   benchmarks (planar regulator, stochastic LQR on a ball).
//! - [`residual`]: HJB residual, loss terms, and their gradients.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod linalg;
pub mod network;
pub mod optimizer;
pub mod problem;
pub mod residual;

pub use error::CoreError;
