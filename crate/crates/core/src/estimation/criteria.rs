use serde::{Deserialize, Serialize};

/// Information criteria computed from an unnormalized log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub hqc: f64,
    pub bic: f64,
}

/// AIC = −2ℓ + 2k, HQC = −2ℓ + 2k ln ln T, BIC = −2ℓ + k ln T.
///
/// Differences between two models are obtained by passing the difference in
/// log-likelihoods and in parameter counts.
pub fn information_criteria(loglik: f64, k: usize, n_obs: usize) -> InformationCriteria {
    let k = k as f64;
    let ln_t = (n_obs as f64).ln();
    InformationCriteria {
        aic: -2.0 * loglik + 2.0 * k,
        hqc: -2.0 * loglik + 2.0 * k * ln_t.ln(),
        bic: -2.0 * loglik + k * ln_t,
    }
}
