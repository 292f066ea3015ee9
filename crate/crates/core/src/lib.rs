//! Probabilistic adaptive screening (PAS) and adaptive screening (AS) for
//! short-term extreme value prediction of non-linear loads.
//!
//! A long, cheap low-fidelity (LF) Monte-Carlo record is screened for the
//! events whose high-fidelity (HF) response should be evaluated. PAS links the
//! two fidelities through a bivariate copula fitted to the evaluated pairs and
//! propagates the full LF record through it by conditional bootstrapping. AS
//! treats the LF order statistics as a proxy for the HF ones and regresses the
//! HF values with a Gaussian process over log exceedance probability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod as_baseline;
pub mod cases;
pub mod copula;
pub mod empirical;
pub mod engine;
pub mod error;
pub mod keyvalue;
pub mod metrics;
pub mod numeric;
pub mod par;
pub mod signals;

pub use error::{PasError, Result};
