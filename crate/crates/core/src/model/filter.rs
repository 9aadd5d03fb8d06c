use super::{
    clamp_log_lambda, unconditional_mean, FilterInit, FilterPath, ModelError, ParamVector, RowMatrix, SeriesData,
    LAMBDA_FLOOR, LOG_LAMBDA_MAX,
};

/// Default starting values: `λ̂_1 = max(ȳ, LAMBDA_FLOOR)`, `α̂_1` and `γ̂_1`
/// at the unconditional means of their AR(1) recursions.
pub fn default_init(data: &SeriesData, theta: &ParamVector) -> FilterInit {
    FilterInit {
        lambda1: data.mean_y().max(LAMBDA_FLOOR),
        alpha1: unconditional_mean(theta.delta_alpha, theta.phi_alpha),
        gamma1: theta.gamma.iter().map(|g| unconditional_mean(g.delta, g.phi)).collect(),
    }
}

/// State of the recursion at period `t`: `λ_t`, `α_t`, `γ_t` and `e_{t-1}`.
///
/// Filtering, simulation and forecasting all advance this one state so the
/// three can never drift apart.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub log_lambda: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub e_prev: f64,
}

impl FilterState {
    pub fn new(init: &FilterInit) -> Self {
        let log_lambda = clamp_log_lambda(init.lambda1.ln());
        Self {
            log_lambda,
            lambda: log_lambda.exp(),
            alpha: init.alpha1,
            gamma: init.gamma1.clone(),
            // e_0 = 0
            e_prev: 0.0,
        }
    }

    /// Scaled innovation `e_t = (y_t − λ_t)/λ_t` for an observed `y_t`.
    #[inline]
    pub fn innovation(&self, y: f64) -> f64 {
        (y - self.lambda) / self.lambda
    }

    /// Consume `y_t` (with `x_t`, `d_t`) and move to period `t + 1`.
    /// Returns `(e_t, saturated)` where `saturated` flags that the unclamped
    /// `log λ_{t+1}` reached the upper bound.
    #[inline]
    pub fn advance(&mut self, theta: &ParamVector, y: f64, x: &[f64], d: &[f64]) -> (f64, bool) {
        let e = self.innovation(y);
        self.alpha = theta.delta_alpha + theta.phi_alpha * self.alpha + theta.kappa_alpha * e * self.e_prev;
        let mut covariate = 0.0;
        for ((g, blk), xj) in self.gamma.iter_mut().zip(&theta.gamma).zip(x) {
            *g = blk.delta + blk.phi * *g + blk.kappa * e * xj;
            covariate += *g * xj;
        }
        let mut seasonal = 0.0;
        for (p, dj) in theta.psi.iter().zip(d) {
            seasonal += p * dj;
        }
        let raw = theta.omega + theta.beta * self.log_lambda + self.alpha * e + covariate + seasonal;
        let saturated = raw.is_nan() || raw >= LOG_LAMBDA_MAX;
        self.log_lambda = clamp_log_lambda(raw);
        self.lambda = self.log_lambda.exp();
        self.e_prev = e;
        (e, saturated)
    }
}

fn validate(data: &SeriesData, theta: &ParamVector, init: &FilterInit) -> Result<(), ModelError> {
    theta.check_finite()?;
    data.check_against(theta)?;
    init.validate()?;
    if init.gamma1.len() != theta.n_covariates() {
        return Err(ModelError::DimensionMismatch(format!(
            "init has {} covariate coefficients, parameters have {}",
            init.gamma1.len(),
            theta.n_covariates()
        )));
    }
    if data.is_empty() {
        return Err(ModelError::TooShort { min: 1, got: 0 });
    }
    Ok(())
}

/// Run the filter over `data` at fixed `theta`, returning the full path.
pub fn filter(data: &SeriesData, theta: &ParamVector, init: &FilterInit) -> Result<FilterPath, ModelError> {
    validate(data, theta, init)?;
    let n = data.len();
    let m = theta.n_covariates();
    let mut path = FilterPath {
        lambda: Vec::with_capacity(n),
        log_lambda: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        gamma: RowMatrix::zeros(n, m),
        innov: Vec::with_capacity(n),
        loglik_terms: Vec::with_capacity(n),
        saturated: 0,
    };
    let mut state = FilterState::new(init);
    for t in 0..n {
        let y = data.y[t] as f64;
        path.lambda.push(state.lambda);
        path.log_lambda.push(state.log_lambda);
        path.alpha.push(state.alpha);
        path.gamma.row_mut(t).copy_from_slice(&state.gamma);
        path.loglik_terms.push(y * state.log_lambda - state.lambda);
        if t + 1 < n {
            let (e, sat) = state.advance(theta, y, data.x.row(t), data.dmat.row(t));
            path.innov.push(e);
            path.saturated += sat as usize;
        } else {
            path.innov.push(state.innovation(y));
        }
    }
    Ok(path)
}

/// Poisson log-likelihood `Σ_t (y_t log λ̂_t − λ̂_t)`, without `log y_t!`.
/// Unnormalized; the caller divides by `T` when it wants the mean.
pub fn loglik(data: &SeriesData, theta: &ParamVector, init: &FilterInit) -> Result<f64, ModelError> {
    validate(data, theta, init)?;
    Ok(loglik_unchecked(data, theta, init))
}

/// Allocation-free likelihood pass used inside the optimizer.
pub(crate) fn loglik_unchecked(data: &SeriesData, theta: &ParamVector, init: &FilterInit) -> f64 {
    let n = data.len();
    let mut state = FilterState::new(init);
    let mut total = 0.0;
    for t in 0..n {
        let y = data.y[t] as f64;
        total += y * state.log_lambda - state.lambda;
        if t + 1 < n {
            state.advance(theta, y, data.x.row(t), data.dmat.row(t));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GammaBlock, LOG_LAMBDA_MIN};

    fn init(lambda1: f64, alpha1: f64) -> FilterInit {
        FilterInit { lambda1, alpha1, gamma1: vec![] }
    }

    #[test]
    fn default_init_uses_unconditional_mean() {
        let data = SeriesData::counts(vec![2, 2, 2]);
        let th = ParamVector::tv_par(0.0, 0.5, 0.1, 0.5, 0.1);
        let i = default_init(&data, &th);
        assert_eq!(i.lambda1, 2.0);
        assert!((i.alpha1 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn default_init_floors_zero_series() {
        let data = SeriesData::counts(vec![0, 0, 0]);
        let i = default_init(&data, &ParamVector::par(0.0, 0.5, 0.1));
        assert_eq!(i.lambda1, LAMBDA_FLOOR);
    }

    #[test]
    fn constant_collapse() {
        let th = ParamVector::par(2f64.ln(), 0.0, 0.0);
        let data = SeriesData::counts(vec![0, 5, 1, 9, 2, 2, 0]);
        let p = filter(&data, &th, &init(7.0, 0.0)).unwrap();
        for l in &p.lambda[1..] {
            assert!((l - 2.0).abs() < 1e-14);
        }
    }

    // Three-step path written out term by term.
    #[test]
    fn hand_unrolled_three_steps() {
        let th = ParamVector::tv_par(0.1, 0.5, 0.05, 0.2, 0.1);
        let data = SeriesData::counts(vec![1, 3, 2]);
        let p = filter(&data, &th, &init(1.0, 0.05)).unwrap();

        let (l1, a1) = (1.0f64, 0.05f64);
        let e1 = (1.0 - l1) / l1;
        let a2 = 0.05 + 0.2 * a1 + 0.1 * e1 * 0.0;
        let ll2 = 0.1 + 0.5 * l1.ln() + a2 * e1;
        let l2 = ll2.exp();
        let e2 = (3.0 - l2) / l2;
        let a3 = 0.05 + 0.2 * a2 + 0.1 * e2 * e1;
        let ll3 = 0.1 + 0.5 * ll2 + a3 * e2;
        let l3 = ll3.exp();

        for (got, want) in [(p.lambda[1], l2), (p.lambda[2], l3), (p.alpha[1], a2), (p.alpha[2], a3)] {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let ll = 1.0 * l1.ln() - l1 + 3.0 * ll2 - l2 + 2.0 * ll3 - l3;
        assert!((p.loglik() - ll).abs() < 1e-12);
        assert!((loglik(&data, &th, &init(1.0, 0.05)).unwrap() - ll).abs() < 1e-12);
    }

    #[test]
    fn single_period_loglik() {
        let th = ParamVector::par(0.0, 0.5, 0.0);
        let ll = loglik(&SeriesData::counts(vec![0]), &th, &init(2.0, 0.0)).unwrap();
        assert_eq!(ll, -2.0);
        let ll = loglik(&SeriesData::counts(vec![3]), &th, &init(3.0, 0.0)).unwrap();
        assert!((ll - (3.0 * 3f64.ln() - 3.0)).abs() < 1e-14);
        assert!((ll - 0.29584).abs() < 1e-5);
    }

    #[test]
    fn static_alpha_matches_constant_coefficient_filter() {
        let a = 0.3;
        let th = ParamVector::par(0.2, 0.6, a);
        let data = SeriesData::counts(vec![1, 4, 0, 2, 7, 3, 3, 1]);
        let p = filter(&data, &th, &init(2.0, a)).unwrap();
        // direct constant-α recursion
        let mut ll = 2f64.ln();
        for t in 0..data.len() - 1 {
            assert!((p.alpha[t] - a).abs() == 0.0);
            let lam = ll.exp();
            let e = (data.y[t] as f64 - lam) / lam;
            ll = 0.2 + 0.6 * ll + a * e;
            assert!((p.log_lambda[t + 1] - ll).abs() < 1e-13);
        }
    }

    #[test]
    fn covariates_and_deterministics_enter_the_recursion() {
        let mut th = ParamVector::par(0.1, 0.3, 0.2);
        th.psi = vec![0.5];
        th.gamma = vec![GammaBlock { delta: 0.1, phi: 0.5, kappa: 0.2 }];
        let x = RowMatrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]], 1).unwrap();
        let d = RowMatrix::from_rows(&[vec![1.0], vec![0.0], vec![1.0]], 1).unwrap();
        let data = SeriesData::new(vec![2, 0, 1], x, d).unwrap();
        let ini = FilterInit { lambda1: 1.5, alpha1: 0.2, gamma1: vec![0.2] };
        let p = filter(&data, &th, &ini).unwrap();

        let l1 = 1.5f64;
        let e1 = (2.0 - l1) / l1;
        let g2 = 0.1 + 0.5 * 0.2 + 0.2 * e1 * 1.0;
        let ll2 = 0.1 + 0.3 * l1.ln() + 0.2 * e1 + g2 * 1.0 + 0.5 * 1.0;
        assert!((p.gamma.get(1, 0) - g2).abs() < 1e-14);
        assert!((p.log_lambda[1] - ll2).abs() < 1e-14);
        let l2 = ll2.exp();
        let e2 = (0.0 - l2) / l2;
        let g3 = 0.1 + 0.5 * g2 + 0.2 * e2 * -2.0;
        let ll3 = 0.1 + 0.3 * ll2 + 0.2 * e2 + g3 * -2.0;
        assert!((p.log_lambda[2] - ll3).abs() < 1e-14);
    }

    #[test]
    fn explosive_parameters_stay_finite() {
        let th = ParamVector::tv_par(5.0, 2.0, 3.0, 1.5, 4.0);
        let data = SeriesData::counts(vec![0, 100, 0, 100, 0, 100, 0, 100]);
        let p = filter(&data, &th, &init(1.0, 0.0)).unwrap();
        for (l, ll) in p.lambda.iter().zip(&p.log_lambda) {
            assert!(l.is_finite() && *l > 0.0);
            assert!((LOG_LAMBDA_MIN..=LOG_LAMBDA_MAX).contains(ll));
        }
        assert!(p.saturated > 0);
        assert!(p.loglik().is_finite());
    }

    #[test]
    fn rejects_non_finite_and_mismatched_inputs() {
        let data = SeriesData::counts(vec![1, 2, 3]);
        let th = ParamVector::par(f64::NAN, 0.5, 0.1);
        assert!(matches!(filter(&data, &th, &init(1.0, 0.0)), Err(ModelError::NonFiniteParameter(n)) if n == "omega"));
        let mut th = ParamVector::par(0.0, 0.5, 0.1);
        th.psi = vec![1.0];
        assert!(matches!(filter(&data, &th, &init(1.0, 0.0)), Err(ModelError::DimensionMismatch(_))));
        let th = ParamVector::par(0.0, 0.5, 0.1);
        assert!(matches!(filter(&data, &th, &init(0.0, 0.0)), Err(ModelError::InvalidInit(_))));
    }
}
