//! Adaptive stochastic model predictive control for stable FIR systems
//! whose impulse responses are sparse.
//!
//! The pipeline has an offline and an online phase:
//!
//! * offline, [`recovery`] draws Gaussian regressors, solves Basis Pursuit
//!   Denoising per output and builds the feasible sparse parameter set
//!   ([`recovery::Fsps`]);
//! * online, at every step the measured output cuts the feasible parameter
//!   set ([`polytope`]), recursive least squares updates the mean which is
//!   projected onto the intersection of both sets ([`estimator`]), and the
//!   MPC in [`controller`] computes an input sequence whose output chance
//!   constraint holds for every model still consistent with the data.
//!
//! [`harness`] wires everything into closed-loop runs and paired Monte
//! Carlo comparisons against the variant that ignores sparsity.

// Negated comparisons double as NaN rejection in argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod plant;
pub mod polytope;
pub mod recovery;

pub use error::{Error, Result};
