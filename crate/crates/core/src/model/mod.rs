//! The TV-PARX data model: parameter and data containers, the score-driven
//! filter recursion, process simulation and forecasting.
//!
//! The intensity follows
//!
//! ```text
//! log λ_{t+1} = ω + β log λ_t + α_{t+1} e_t + γ'_{t+1} x_t + ψ' d_t
//! α_{t+1}     = δ_α + φ_α α_t + κ_α e_t e_{t-1}
//! γ_{j,t+1}   = δ_γj + φ_γj γ_{j,t} + κ_γj e_t x_{j,t}
//! ```
//!
//! with `e_t = (y_t − λ_t) / λ_t` the scaled Poisson score. Static
//! coefficient blocks are obtained by freezing `φ = κ = 0`, so PARX and
//! TV-PARX share one recursion.

pub(crate) mod filter;
mod forecast;
pub mod poisson;
pub mod rng;
mod simulate;

pub use filter::{default_init, filter, loglik, FilterState};
pub use forecast::{forecast, ForecastResult, HorizonForecast};
pub use simulate::{simulate, simulate_with, SimulateOptions, Simulation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower clamp for `log λ_t`.
pub const LOG_LAMBDA_MIN: f64 = -20.0;
/// Upper clamp for `log λ_t` (`e^25 ≈ 7.2e10`).
pub const LOG_LAMBDA_MAX: f64 = 25.0;
/// Floor for the default initial intensity.
pub const LAMBDA_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite parameter `{0}`")]
    NonFiniteParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("series too short: need at least {min} observations, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("invalid initial state: {0}")]
    InvalidInit(String),
    #[error(
        "log-intensity saturated at the upper clamp in {saturated} of {total} periods \
         (limit {limit:.3}); the parameterization looks explosive"
    )]
    OverflowGuard { saturated: usize, total: usize, limit: f64 },
}

/// Dense row-major matrix; row `t` holds the values for period `t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != rows * cols {
            return Err(ModelError::DimensionMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self, ModelError> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(ModelError::DimensionMismatch(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_columns(columns: &[Vec<f64>], rows: usize) -> Result<Self, ModelError> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(ModelError::DimensionMismatch(format!("column {j} has {} rows, expected {rows}", c.len())));
            }
            for (t, v) in c.iter().enumerate() {
                m.data[t * cols + j] = *v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.cols..(t + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self.get(t, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Which coefficient blocks are present and which of them move over time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_covariates: usize,
    pub n_deterministics: usize,
    pub alpha_time_varying: bool,
    pub gamma_time_varying: Vec<bool>,
}

impl ModelSpec {
    /// TV-PARX with every covariate coefficient time-varying.
    pub fn tv_parx(n_covariates: usize, n_deterministics: usize) -> Self {
        Self { n_covariates, n_deterministics, alpha_time_varying: true, gamma_time_varying: vec![true; n_covariates] }
    }

    /// Constant-coefficient PARX.
    pub fn parx(n_covariates: usize, n_deterministics: usize) -> Self {
        Self {
            n_covariates,
            n_deterministics,
            alpha_time_varying: false,
            gamma_time_varying: vec![false; n_covariates],
        }
    }

    pub fn tv_par() -> Self {
        Self::tv_parx(0, 0)
    }

    pub fn par() -> Self {
        Self::parx(0, 0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gamma_time_varying.len() != self.n_covariates {
            return Err(ModelError::DimensionMismatch(format!(
                "gamma_time_varying has {} flags for {} covariates",
                self.gamma_time_varying.len(),
                self.n_covariates
            )));
        }
        Ok(())
    }

    /// Free (estimated) parameters in canonical order.
    pub fn free_params(&self) -> Vec<ParamId> {
        let mut ids = vec![ParamId::Omega, ParamId::Beta];
        ids.extend((0..self.n_deterministics).map(ParamId::Psi));
        ids.push(ParamId::DeltaAlpha);
        if self.alpha_time_varying {
            ids.push(ParamId::PhiAlpha);
            ids.push(ParamId::KappaAlpha);
        }
        for j in 0..self.n_covariates {
            ids.push(ParamId::DeltaGamma(j));
            if self.gamma_time_varying.get(j).copied().unwrap_or(false) {
                ids.push(ParamId::PhiGamma(j));
                ids.push(ParamId::KappaGamma(j));
            }
        }
        ids
    }

    /// Number of estimated parameters `k`.
    pub fn n_free(&self) -> usize {
        self.free_params().len()
    }

    /// Zero out the dynamics of every block declared static.
    pub fn apply_nesting(&self, theta: &mut ParamVector) {
        if !self.alpha_time_varying {
            theta.phi_alpha = 0.0;
            theta.kappa_alpha = 0.0;
        }
        for (g, tv) in theta.gamma.iter_mut().zip(&self.gamma_time_varying) {
            if !tv {
                g.phi = 0.0;
                g.kappa = 0.0;
            }
        }
    }
}

/// Identifies one scalar entry of [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    Omega,
    Beta,
    Psi(usize),
    DeltaAlpha,
    PhiAlpha,
    KappaAlpha,
    DeltaGamma(usize),
    PhiGamma(usize),
    KappaGamma(usize),
}

impl ParamId {
    pub fn name(&self) -> String {
        match self {
            ParamId::Omega => "omega".into(),
            ParamId::Beta => "beta".into(),
            ParamId::Psi(i) => format!("psi[{i}]"),
            ParamId::DeltaAlpha => "delta_alpha".into(),
            ParamId::PhiAlpha => "phi_alpha".into(),
            ParamId::KappaAlpha => "kappa_alpha".into(),
            ParamId::DeltaGamma(j) => format!("delta_gamma[{j}]"),
            ParamId::PhiGamma(j) => format!("phi_gamma[{j}]"),
            ParamId::KappaGamma(j) => format!("kappa_gamma[{j}]"),
        }
    }
}

/// Score-driven dynamics of one covariate coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaBlock {
    pub delta: f64,
    pub phi: f64,
    pub kappa: f64,
}

/// Static parameter vector θ = (ω, β, ψ, δ_α, φ_α, κ_α, {δ_γj, φ_γj, κ_γj}).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    pub omega: f64,
    pub beta: f64,
    pub psi: Vec<f64>,
    pub delta_alpha: f64,
    pub phi_alpha: f64,
    pub kappa_alpha: f64,
    pub gamma: Vec<GammaBlock>,
}

impl ParamVector {
    /// TV-PAR parameters (no covariates, no deterministics).
    pub fn tv_par(omega: f64, beta: f64, delta_alpha: f64, phi_alpha: f64, kappa_alpha: f64) -> Self {
        Self { omega, beta, delta_alpha, phi_alpha, kappa_alpha, ..Default::default() }
    }

    /// Static PAR parameters: constant `α`.
    pub fn par(omega: f64, beta: f64, alpha: f64) -> Self {
        Self::tv_par(omega, beta, alpha, 0.0, 0.0)
    }

    pub fn n_covariates(&self) -> usize {
        self.gamma.len()
    }

    pub fn n_deterministics(&self) -> usize {
        self.psi.len()
    }

    /// `ᾱ = δ_α / (1 − φ_α)`; `None` when `φ_α = 1`.
    pub fn alpha_bar(&self) -> Option<f64> {
        if self.phi_alpha == 1.0 {
            None
        } else {
            Some(self.delta_alpha / (1.0 - self.phi_alpha))
        }
    }

    pub fn get(&self, id: ParamId) -> f64 {
        match id {
            ParamId::Omega => self.omega,
            ParamId::Beta => self.beta,
            ParamId::Psi(i) => self.psi[i],
            ParamId::DeltaAlpha => self.delta_alpha,
            ParamId::PhiAlpha => self.phi_alpha,
            ParamId::KappaAlpha => self.kappa_alpha,
            ParamId::DeltaGamma(j) => self.gamma[j].delta,
            ParamId::PhiGamma(j) => self.gamma[j].phi,
            ParamId::KappaGamma(j) => self.gamma[j].kappa,
        }
    }

    pub fn set(&mut self, id: ParamId, v: f64) {
        match id {
            ParamId::Omega => self.omega = v,
            ParamId::Beta => self.beta = v,
            ParamId::Psi(i) => self.psi[i] = v,
            ParamId::DeltaAlpha => self.delta_alpha = v,
            ParamId::PhiAlpha => self.phi_alpha = v,
            ParamId::KappaAlpha => self.kappa_alpha = v,
            ParamId::DeltaGamma(j) => self.gamma[j].delta = v,
            ParamId::PhiGamma(j) => self.gamma[j].phi = v,
            ParamId::KappaGamma(j) => self.gamma[j].kappa = v,
        }
    }

    /// Every parameter, in canonical order.
    pub fn all_ids(&self) -> Vec<ParamId> {
        ModelSpec::tv_parx(self.n_covariates(), self.n_deterministics()).free_params()
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        for id in self.all_ids() {
            if !self.get(id).is_finite() {
                return Err(ModelError::NonFiniteParameter(id.name()));
            }
        }
        Ok(())
    }
}

// Serialized with flat, named arrays so a report reads like a parameter table.
#[derive(Serialize, Deserialize)]
struct ParamVectorRepr {
    omega: f64,
    beta: f64,
    #[serde(default)]
    psi: Vec<f64>,
    delta_alpha: f64,
    #[serde(default)]
    phi_alpha: f64,
    #[serde(default)]
    kappa_alpha: f64,
    #[serde(default)]
    delta_gamma: Vec<f64>,
    #[serde(default)]
    phi_gamma: Vec<f64>,
    #[serde(default)]
    kappa_gamma: Vec<f64>,
}

impl Serialize for ParamVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ParamVectorRepr {
            omega: self.omega,
            beta: self.beta,
            psi: self.psi.clone(),
            delta_alpha: self.delta_alpha,
            phi_alpha: self.phi_alpha,
            kappa_alpha: self.kappa_alpha,
            delta_gamma: self.gamma.iter().map(|g| g.delta).collect(),
            phi_gamma: self.gamma.iter().map(|g| g.phi).collect(),
            kappa_gamma: self.gamma.iter().map(|g| g.kappa).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ParamVectorRepr::deserialize(d)?;
        let m = r.delta_gamma.len();
        let fill = |v: Vec<f64>, name: &str| -> Result<Vec<f64>, D::Error> {
            match v.len() {
                0 => Ok(vec![0.0; m]),
                n if n == m => Ok(v),
                n => Err(serde::de::Error::custom(format!("{name} has {n} entries but delta_gamma has {m}"))),
            }
        };
        let phi = fill(r.phi_gamma, "phi_gamma")?;
        let kappa = fill(r.kappa_gamma, "kappa_gamma")?;
        Ok(ParamVector {
            omega: r.omega,
            beta: r.beta,
            psi: r.psi,
            delta_alpha: r.delta_alpha,
            phi_alpha: r.phi_alpha,
            kappa_alpha: r.kappa_alpha,
            gamma: r
                .delta_gamma
                .into_iter()
                .zip(phi)
                .zip(kappa)
                .map(|((delta, phi), kappa)| GammaBlock { delta, phi, kappa })
                .collect(),
        })
    }
}

/// Observed counts with aligned covariates `x_t` and deterministics `d_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub y: Vec<u64>,
    pub x: RowMatrix,
    pub dmat: RowMatrix,
    /// Optional pass-through period labels (e.g. ISO dates).
    pub labels: Option<Vec<String>>,
}

impl SeriesData {
    pub fn new(y: Vec<u64>, x: RowMatrix, dmat: RowMatrix) -> Result<Self, ModelError> {
        let t = y.len();
        if x.rows() != t || dmat.rows() != t {
            return Err(ModelError::DimensionMismatch(format!(
                "y has {t} rows, x has {}, d has {}",
                x.rows(),
                dmat.rows()
            )));
        }
        Ok(Self { y, x, dmat, labels: None })
    }

    /// Counts only, no covariates or deterministics.
    pub fn counts(y: Vec<u64>) -> Self {
        let t = y.len();
        Self { y, x: RowMatrix::zeros(t, 0), dmat: RowMatrix::zeros(t, 0), labels: None }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.cols()
    }

    pub fn n_deterministics(&self) -> usize {
        self.dmat.cols()
    }

    pub fn mean_y(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.y.len() as f64
    }

    pub fn check_against(&self, theta: &ParamVector) -> Result<(), ModelError> {
        if self.n_covariates() != theta.n_covariates() {
            return Err(ModelError::DimensionMismatch(format!(
                "data has {} covariates, parameters have {}",
                self.n_covariates(),
                theta.n_covariates()
            )));
        }
        if self.n_deterministics() != theta.n_deterministics() {
            return Err(ModelError::DimensionMismatch(format!(
                "data has {} deterministics, parameters have {}",
                self.n_deterministics(),
                theta.n_deterministics()
            )));
        }
        Ok(())
    }
}

/// Starting values of the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterInit {
    pub lambda1: f64,
    pub alpha1: f64,
    pub gamma1: Vec<f64>,
}

impl FilterInit {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(ModelError::InvalidInit(format!("lambda1 must be positive and finite, got {}", self.lambda1)));
        }
        if !self.alpha1.is_finite() || self.gamma1.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::InvalidInit("non-finite alpha1 or gamma1".into()));
        }
        Ok(())
    }

    /// Data-free start: `λ̂_1 = exp(ω / (1 − β))` (clamped) and the dynamic
    /// coefficients at their unconditional means.
    pub fn unconditional(theta: &ParamVector) -> Self {
        let level = if theta.beta < 1.0 { theta.omega / (1.0 - theta.beta) } else { theta.omega };
        Self {
            lambda1: clamp_log_lambda(level).exp(),
            alpha1: unconditional_mean(theta.delta_alpha, theta.phi_alpha),
            gamma1: theta.gamma.iter().map(|g| unconditional_mean(g.delta, g.phi)).collect(),
        }
    }
}

/// Mean of a stationary AR(1) with intercept `delta` and slope `phi`; falls
/// back to `delta` on the unit root.
pub(crate) fn unconditional_mean(delta: f64, phi: f64) -> f64 {
    if phi == 1.0 {
        delta
    } else {
        delta / (1.0 - phi)
    }
}

/// NaN maps to the upper bound so a broken parameterization never yields NaN.
#[inline]
pub fn clamp_log_lambda(v: f64) -> f64 {
    if v.is_nan() {
        LOG_LAMBDA_MAX
    } else {
        v.clamp(LOG_LAMBDA_MIN, LOG_LAMBDA_MAX)
    }
}

/// Per-period output of the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPath {
    pub lambda: Vec<f64>,
    pub log_lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: RowMatrix,
    pub innov: Vec<f64>,
    pub loglik_terms: Vec<f64>,
    /// Periods whose unclamped log-intensity reached the upper bound.
    #[serde(default)]
    pub saturated: usize,
}

impl FilterPath {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_terms.iter().sum()
    }
}
