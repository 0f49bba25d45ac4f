//! Optimal insurance indemnities for a buyer with maxmin expected utility and
//! an expected-utility insurer.
//!
//! The buyer evaluates a contract by its worst expected utility over an
//! ambiguity ball around a reference loss distribution. The ball is either
//! a Wasserstein ball of piecewise linear cdfs or a Rényi ball of pmfs. The
//! insurer accepts any contract that keeps its expected utility above its
//! reservation level. On a finite loss grid the buyer's problem is a convex
//! saddle problem, solved by successive convex programming
//! ([`contract::scp_solve`]). The [`analytic`] module provides closed-form and
//! first-order-condition contracts, plus KKT verifiers used to cross-check
//! the numerical solutions.
//!
//! Module map:
//! - [`model`]: grids, wealth, utilities, measures, indemnity schedules.
//! - [`metrics`]: Wasserstein distance for piecewise linear cdfs, Rényi
//!   divergence, stochastic dominance, ambiguity-set specification.
//! - [`ambiguity`]: inner worst-case solvers.
//! - [`contract`]: outer maximin solver and the SCP loop.
//! - [`analytic`]: deductibles, pointwise FOC contracts, layer contracts,
//!   Δ-estimators, certainty equivalents, KKT checks.
//! - [`harness`]: sampling, configuration, brute-force oracle, experiment
//!   runs and CSV output.

// `!(x > 0.0)` guards reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several parallel arrays by the same knot.
#![allow(clippy::needless_range_loop)]

pub mod ambiguity;
pub mod analytic;
pub mod contract;
pub mod error;
pub mod harness;
mod linalg;
pub mod metrics;
pub mod model;
pub mod par;

pub use error::{Error, Result};
