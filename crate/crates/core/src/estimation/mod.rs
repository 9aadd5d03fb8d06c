//! Poisson quasi-maximum-likelihood estimation.
//!
//! The mean log-likelihood is maximized over unconstrained coordinates
//! (logistic for `β`, tanh for `φ`, exp for `κ_α`) by multi-start BFGS on
//! central-difference gradients. Standard errors come from a numerical
//! Hessian and an outer product of numerical per-period scores.

pub mod covariance;
mod criteria;
mod fit;
pub mod numdiff;
pub mod optimize;
mod transform;

pub use covariance::{covariance, CovarianceEstimate, CovarianceKind};
pub use criteria::{information_criteria, InformationCriteria};
pub use fit::{fit, moment_start, ConvergenceReport, FitOptions, FitResult};
pub use transform::{Transform, TransformMap, KAPPA_FLOOR};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model specification: {0}")]
    Spec(String),
    #[error("insufficient data: {n_obs} observations, at least {required} required")]
    InsufficientData { n_obs: usize, required: usize },
    #[error("degenerate data: all counts are zero, the likelihood has no interior maximum")]
    DegenerateData,
}
