//! Behavioral pseudo-metrics for finite discounted MDPs.
//!
//! The crate computes the bisimulation-style metric `d_M` as the fixed point
//! of an optimal-transport Bellman operator solved with exact 1-Wasserstein
//! distances, builds canonical ε-quotients on top of it, plans in the
//! quotient, evaluates a quantitative modal μ-calculus against the metric,
//! and runs the experiment suites that exercise all of the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod logic;
pub mod mdp;
pub mod metric;
pub mod planning;
pub mod quotient;
pub mod transport;

pub use error::{Error, Result};
