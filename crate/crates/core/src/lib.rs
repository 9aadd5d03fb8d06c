//! Time-varying Poisson autoregression with exogenous covariates (TV-PARX).
//!
//! Score-driven filtering of a count-series intensity, Poisson
//! quasi-maximum-likelihood estimation with Hessian and sandwich standard
//! errors, stationarity and invertibility diagnostics, simulation,
//! forecasting, and a Monte Carlo harness comparing time-varying and static
//! autoregressions on step-function intensities.

pub mod diagnostics;
pub mod estimation;
pub mod io;
pub mod model;
pub mod montecarlo;
mod serde_float;

pub use diagnostics::{check_invertibility, check_stationarity, moment_sanity};
pub use estimation::{fit, information_criteria, FitOptions, FitResult};
pub use model::{
    default_init, filter, forecast, loglik, simulate, FilterInit, FilterPath, ForecastResult, GammaBlock, ModelError,
    ModelSpec, ParamId, ParamVector, RowMatrix, SeriesData,
};
pub use montecarlo::{run_cell, run_table, McOptions, McResult, RmseMetric, StepDgpConfig};
