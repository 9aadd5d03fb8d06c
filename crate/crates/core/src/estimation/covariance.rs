//! Asymptotic covariance of the QMLE.
//!
//! `Ĵ` is the negative numerical Hessian of the mean log-likelihood and `Î`
//! the outer product of per-period numerical scores, both in constrained
//! coordinates. The Hessian-based estimate is `Ĵ⁻¹/T`; the sandwich is
//! `Ĵ⁻¹ Î Ĵ⁻¹ / T`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{numdiff, TransformMap};
use crate::model::{default_init, filter, ModelError, ParamVector, SeriesData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Hessian,
    Sandwich,
    #[default]
    Both,
}

/// Relative eigenvalue threshold below which `Ĵ` is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub names: Vec<String>,
    pub vcov_hessian: Option<DMatrix<f64>>,
    pub vcov_sandwich: Option<DMatrix<f64>>,
    pub std_errors_hessian: Option<Vec<f64>>,
    pub std_errors_sandwich: Option<Vec<f64>>,
    /// Eigenvalues of `Ĵ` when it was not positive definite; the matrices
    /// above then use its pseudo-inverse.
    pub singular_eigenvalues: Option<Vec<f64>>,
}

impl CovarianceEstimate {
    /// Hessian-based standard errors when available, else sandwich.
    pub fn std_errors(&self) -> Vec<f64> {
        self.std_errors_hessian.clone().or_else(|| self.std_errors_sandwich.clone()).unwrap_or_default()
    }

    pub fn is_singular(&self) -> bool {
        self.singular_eigenvalues.is_some()
    }
}

/// Extra attempts at the Hessian, each with a step ten times smaller, when
/// `Ĵ` is not positive definite.
pub const HESSIAN_REFINEMENTS: usize = 3;

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && symmetrize(m).cholesky().is_some()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric matrix, or its eigen pseudo-inverse with the
/// eigenvalues when it is not positive definite.
pub fn inverse_pd(m: &DMatrix<f64>) -> (DMatrix<f64>, Option<Vec<f64>>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let pd = max_abs > 0.0 && min > SINGULAR_TOL * max_abs && min.is_finite();
    if pd {
        if let Some(chol) = sym.clone().cholesky() {
            return (symmetrize(&chol.inverse()), None);
        }
    }
    let n = sym.nrows();
    let mut pinv = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > SINGULAR_TOL * max_abs && lam.is_finite() {
            let v = eig.eigenvectors.column(i);
            pinv += (v * v.transpose()) / lam;
        }
    }
    (symmetrize(&pinv), Some(eig.eigenvalues.iter().copied().collect()))
}

/// Assemble both covariance estimates from `Ĵ` (negative Hessian of the
/// mean log-likelihood), `Î` (mean OPG) and the sample size.
pub fn assemble(
    info: &DMatrix<f64>,
    opg: Option<&DMatrix<f64>>,
    n_obs: usize,
    kind: CovarianceKind,
    names: Vec<String>,
) -> CovarianceEstimate {
    let t = n_obs as f64;
    let (jinv, singular) = inverse_pd(info);
    // a negative variance has no standard error
    let se =
        |m: &DMatrix<f64>| m.diagonal().iter().map(|&v| if v >= 0.0 { v.sqrt() } else { f64::NAN }).collect::<Vec<_>>();
    let hess = matches!(kind, CovarianceKind::Hessian | CovarianceKind::Both).then(|| symmetrize(&(&jinv / t)));
    let sand = match (kind, opg) {
        (CovarianceKind::Sandwich | CovarianceKind::Both, Some(i)) => Some(symmetrize(&(&jinv * i * &jinv / t))),
        _ => None,
    };
    CovarianceEstimate {
        names,
        std_errors_hessian: hess.as_ref().map(se),
        std_errors_sandwich: sand.as_ref().map(se),
        vcov_hessian: hess,
        vcov_sandwich: sand,
        singular_eigenvalues: singular,
    }
}

/// Covariance of the free parameters of `theta_hat`.
///
/// `hess_step_rel` scales the second-difference steps and `score_step_rel`
/// the first-difference steps of the per-period scores; each absolute step
/// is `rel · max(1, |θ_i|)`.
pub fn covariance(
    data: &SeriesData,
    theta_hat: &ParamVector,
    map: &TransformMap,
    kind: CovarianceKind,
    hess_step_rel: f64,
    score_step_rel: f64,
) -> Result<CovarianceEstimate, ModelError> {
    let n = data.len();
    let x0 = map.constrained(theta_hat);
    // Validate once; the closures below then cannot fail on shape.
    filter(data, theta_hat, &default_init(data, theta_hat))?;

    let mean_loglik = |v: &[f64]| {
        let th = map.from_constrained(v);
        crate::model::filter::loglik_unchecked(data, &th, &default_init(data, &th)) / n as f64
    };
    // Under bursts the curvature is so sharp that the default step straddles
    // it; shrink the step until Ĵ is positive definite.
    let mut info = -numdiff::hessian(mean_loglik, &x0, &numdiff::steps(&x0, hess_step_rel));
    for k in 1..=HESSIAN_REFINEMENTS {
        if is_pd(&info) {
            break;
        }
        let rel = hess_step_rel * 0.1f64.powi(k as i32);
        let finer = -numdiff::hessian(mean_loglik, &x0, &numdiff::steps(&x0, rel));
        if is_pd(&finer) {
            info = finer;
        }
    }

    let opg = if matches!(kind, CovarianceKind::Sandwich | CovarianceKind::Both) {
        let terms = |v: &[f64]| {
            let th = map.from_constrained(v);
            filter(data, &th, &default_init(data, &th)).map(|p| p.loglik_terms).unwrap_or_else(|_| vec![f64::NAN; n])
        };
        let scores = numdiff::jacobian(terms, &x0, &numdiff::steps(&x0, score_step_rel));
        Some(scores.transpose() * &scores / n as f64)
    } else {
        None
    };
    Ok(assemble(&info, opg.as_ref(), n, kind, map.names()))
}
