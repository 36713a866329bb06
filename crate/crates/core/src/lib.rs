//! Estimation of the cross-world mediation mean `E[Y(1, M(0))]` and the
//! natural direct/indirect effects.
//!
//! The crate provides two main estimation routes for the target mean:
//! a nonparametric cross-fitted route whose nuisances are random forests
//! ([`estimators::estimate_qr`]), and a penalized parametric route whose
//! nuisances are L1-regularized (generalized) linear fits driven by a
//! sequence of tilted loss functions ([`estimators::estimate_mqr`]).
//! Baseline estimators, influence-function inference, simulation data
//! generators with counterfactual oracles, and a Monte Carlo benchmark
//! harness round out the library.

pub mod data;
pub mod dgp;
pub mod estimators;
pub mod folds;
pub mod forest;
pub mod harness;
pub mod inference;
pub mod learners;
pub mod losses;
pub mod math;
pub mod optim;

mod error;

pub use error::{Error, Result};
