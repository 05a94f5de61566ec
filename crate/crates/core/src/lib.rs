//! Simulation and Monte Carlo verification of high-frequency limit theorems
//! for realized power variations of Itô semimartingales with jumps.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] declares simulable models and their hypothesis profile,
//! * [`simulate`] produces fine-grid paths with an exact jump record,
//! * [`functions`] holds the test-function calculus and Gaussian moments,
//! * [`functionals`] computes realized statistics and pathwise targets,
//! * [`limits`] evaluates limit values, asymptotic variances and CLT regions,
//! * [`harness`] runs Monte Carlo experiments and assembles reports.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functionals;
pub mod functions;
pub mod harness;
pub mod limits;
pub mod model;
pub mod quadrature;
pub mod simulate;

pub use error::{Error, Result};
pub use functionals::FunctionalSeries;
pub use functions::TestFunction;
pub use limits::{Functional, Target, Theorem};
pub use model::{ModelSpec, SamplingSpec, TruncationSpec};
pub use simulate::PathBundle;
