//! Computable checks of the stationarity and invertibility conditions.
//!
//! None of these reports ever rejects a parameter vector; they annotate fits
//! and simulations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{simulate_with, FilterInit, ParamVector, RowMatrix, SeriesData, SimulateOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// `ᾱ = δ_α / (1 − φ_α)`.
    #[serde(with = "crate::serde_float")]
    pub alpha_bar: f64,
    /// `β |β + ᾱ|`.
    #[serde(with = "crate::serde_float")]
    pub product: f64,
    pub cond_phi: bool,
    pub cond_beta: bool,
    pub cond_product: bool,
    /// `|φ_γj| < 1` per covariate.
    pub gamma_conds: Vec<bool>,
    pub all_satisfied: bool,
}

/// Sufficient conditions for a stationary ergodic intensity:
/// `|φ_α| < 1`, `0 < β < 1`, `β|β + ᾱ| < 1`, and `|φ_γj| < 1`.
pub fn check_stationarity(theta: &ParamVector) -> Result<StationarityReport, DiagnosticsError> {
    let alpha_bar =
        theta.alpha_bar().ok_or_else(|| DiagnosticsError::Domain("phi_alpha = 1 leaves alpha_bar undefined".into()))?;
    let product = theta.beta * (theta.beta + alpha_bar).abs();
    let cond_phi = theta.phi_alpha.abs() < 1.0;
    let cond_beta = theta.beta > 0.0 && theta.beta < 1.0;
    let cond_product = product < 1.0;
    let gamma_conds: Vec<bool> = theta.gamma.iter().map(|g| g.phi.abs() < 1.0).collect();
    let all_satisfied = cond_phi && cond_beta && cond_product && gamma_conds.iter().all(|&c| c);
    Ok(StationarityReport { alpha_bar, product, cond_phi, cond_beta, cond_product, gamma_conds, all_satisfied })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    /// Lower bound on `log λ̂_t`: `(ω − (δ_α + κ_α)/(1 − φ_α)) / (1 − β)`.
    #[serde(with = "crate::serde_float")]
    pub ell: f64,
    /// Sample mean of the log contraction coefficient along the data.
    #[serde(with = "crate::serde_float")]
    pub empirical_log_contraction: f64,
    pub satisfied_empirically: bool,
}

/// The bound `ℓ`; `None` outside `κ_α > 0`, `|φ_α| < 1`, `0 < β < 1`.
pub fn ell_bound(theta: &ParamVector) -> Option<f64> {
    let ok = theta.kappa_alpha > 0.0 && theta.phi_alpha.abs() < 1.0 && theta.beta > 0.0 && theta.beta < 1.0;
    ok.then(|| (theta.omega - (theta.delta_alpha + theta.kappa_alpha) / (1.0 - theta.phi_alpha)) / (1.0 - theta.beta))
}

/// Pointwise empirical contraction check at `theta` along the observed
/// counts.
///
/// Runs `ᾱ_{t+1} = δ_α + φ_α ᾱ_t + κ_α z_t z_{t−1}` with
/// `z_t = y_t e^{−ℓ} − 1` (`z_0 = 0`, `ᾱ_1 = δ_α/(1 − φ_α)`), and averages
/// `log(β) + ω + ᾱ_{t+1} z_t − ℓ(1 − β)`. A negative mean is the sample
/// analogue of the contraction condition.
pub fn check_invertibility(theta: &ParamVector, data: &SeriesData) -> Result<InvertibilityReport, DiagnosticsError> {
    let ell = ell_bound(theta)
        .ok_or_else(|| DiagnosticsError::Domain("requires kappa_alpha > 0, |phi_alpha| < 1 and 0 < beta < 1".into()))?;
    if data.is_empty() {
        return Err(DiagnosticsError::Domain("empty series".into()));
    }
    let scale = (-ell).exp();
    let log_beta = theta.beta.ln();
    let mut alpha_bar = theta.delta_alpha / (1.0 - theta.phi_alpha);
    let mut z_prev = 0.0;
    let mut total = 0.0;
    for &y in &data.y {
        let z = y as f64 * scale - 1.0;
        alpha_bar = theta.delta_alpha + theta.phi_alpha * alpha_bar + theta.kappa_alpha * z * z_prev;
        total += log_beta + theta.omega + alpha_bar * z - ell * (1.0 - theta.beta);
        z_prev = z;
    }
    let mean = total / data.len() as f64;
    Ok(InvertibilityReport { ell, empirical_log_contraction: mean, satisfied_empirically: mean < 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: u32,
    pub n_obs: usize,
    pub mean_y: f64,
    /// Empirical `E[y^k]`.
    pub moment_y: f64,
    /// Standard error of `moment_y`.
    pub moment_y_std_error: f64,
    /// Empirical `E[|log λ|^k]`.
    pub moment_abs_log_lambda: f64,
    /// Hill estimate of the tail index of `y` over the top `√T` order
    /// statistics; `None` when too few positive counts.
    pub hill_tail_index: Option<f64>,
    pub saturated_periods: usize,
    pub saturation_fraction: f64,
    /// Raised when any period hit the upper log-intensity clamp.
    pub saturation_warning: bool,
    pub stationarity: Option<StationarityReport>,
}

/// Simulate `n_obs` periods at `theta` (zero covariates) and summarize
/// moments. Advisory only: explosive parameterizations show up as clamp
/// saturation instead of an error.
pub fn moment_sanity(
    theta: &ParamVector,
    n_obs: usize,
    order: u32,
    seed: u64,
) -> Result<MomentReport, DiagnosticsError> {
    let init = FilterInit::unconditional(theta);
    let sim = simulate_with(
        theta,
        n_obs,
        RowMatrix::zeros(n_obs, theta.n_covariates()),
        RowMatrix::zeros(n_obs, theta.n_deterministics()),
        &init,
        seed,
        SimulateOptions { max_saturation_fraction: f64::INFINITY },
    )
    .map_err(|e| DiagnosticsError::Domain(e.to_string()))?;

    let n = n_obs as f64;
    let k = order as i32;
    let powered: Vec<f64> = sim.data.y.iter().map(|&y| (y as f64).powi(k)).collect();
    let moment_y = powered.iter().sum::<f64>() / n;
    let var = powered.iter().map(|v| (v - moment_y).powi(2)).sum::<f64>() / (n - 1.0);
    let moment_abs_log_lambda = sim.path.log_lambda.iter().map(|l| l.abs().powi(k)).sum::<f64>() / n;

    Ok(MomentReport {
        order,
        n_obs,
        mean_y: sim.data.mean_y(),
        moment_y,
        moment_y_std_error: (var / n).sqrt(),
        moment_abs_log_lambda,
        hill_tail_index: hill_estimator(&sim.data.y),
        saturated_periods: sim.path.saturated,
        saturation_fraction: sim.path.saturated as f64 / n,
        saturation_warning: sim.path.saturated > 0,
        stationarity: check_stationarity(theta).ok(),
    })
}

fn hill_estimator(y: &[u64]) -> Option<f64> {
    let mut sorted: Vec<u64> = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = (y.len() as f64).sqrt().floor() as usize;
    if k < 2 || k >= sorted.len() || sorted[k] == 0 {
        return None;
    }
    let base = (sorted[k] as f64).ln();
    let h = sorted[..k].iter().map(|&v| (v as f64).ln() - base).sum::<f64>() / k as f64;
    (h > 0.0).then(|| 1.0 / h)
}
