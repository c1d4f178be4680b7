//! Simulation and bound-verification toolkit for the (1+1)-ES with
//! success-based step-size adaptation on strongly convex, smooth objectives.
//!
//! * [`objectives`]: diagonal quadratics, a perturbed non-quadratic member
//!   and monotone or translated composites of both.
//! * [`engine`]: the elitist ES chain with seeded sampling.
//! * [`stats`], [`analysis`]: Monte Carlo estimators for per-state
//!   quantities and inequality checks.
//! * [`normal`], [`theory`]: standard-normal functions and the numeric bound
//!   machinery.
//! * [`rates`]: least-squares convergence-rate estimation.
//! * [`harness`]: experiment grids, CSV/SVG output and verification suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod error;
pub mod harness;
pub mod normal;
pub mod objectives;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
