use serde::{Deserialize, Serialize};

use super::filter::FilterState;
use super::poisson::PoissonSampler;
use super::rng::stream;
use super::{FilterPath, ModelError, ParamVector, RowMatrix, SeriesData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonForecast {
    pub h: usize,
    /// `E[y_{T+h} | F_T]`.
    pub mean: f64,
    /// Monte Carlo standard error of `mean` (zero at `h = 1`).
    pub mean_std_error: f64,
    pub q05: u64,
    pub q50: u64,
    pub q95: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// `λ_{T+1}`, known exactly at time `T`.
    pub lambda_next: f64,
    pub horizons: Vec<HorizonForecast>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Forecast `y_{T+1..T+horizon}` from the end of a filtered sample.
///
/// `λ_{T+1}` is deterministic given `F_T`. Beyond one step, `n_paths`
/// continuations of the simulation recursion are run; the mean reported at
/// each horizon is the path average of `λ_{T+h}` and the quantiles are those
/// of the simulated counts. Row `i` of `future_x`/`future_d` holds the
/// regressors of period `T+1+i`; the final row is never needed.
#[allow(clippy::too_many_arguments)]
pub fn forecast(
    path: &FilterPath,
    data: &SeriesData,
    theta: &ParamVector,
    horizon: usize,
    n_paths: usize,
    seed: u64,
    future_x: &RowMatrix,
    future_d: &RowMatrix,
) -> Result<ForecastResult, ModelError> {
    theta.check_finite()?;
    data.check_against(theta)?;
    let n = data.len();
    if n == 0 || path.len() != n {
        return Err(ModelError::DimensionMismatch(format!("filter path has {} periods, data has {n}", path.len())));
    }
    if horizon == 0 || n_paths == 0 {
        return Err(ModelError::DimensionMismatch("horizon and number of paths must be positive".into()));
    }
    for (name, mat, cols) in
        [("future_x", future_x, theta.n_covariates()), ("future_d", future_d, theta.n_deterministics())]
    {
        if mat.rows() != horizon || mat.cols() != cols {
            return Err(ModelError::DimensionMismatch(format!(
                "{name} is {}x{}, expected {horizon}x{cols}",
                mat.rows(),
                mat.cols()
            )));
        }
    }

    let last = n - 1;
    let mut state = FilterState {
        log_lambda: path.log_lambda[last],
        lambda: path.lambda[last],
        alpha: path.alpha[last],
        gamma: path.gamma.row(last).to_vec(),
        e_prev: if last > 0 { path.innov[last - 1] } else { 0.0 },
    };
    state.advance(theta, data.y[last] as f64, data.x.row(last), data.dmat.row(last));
    let lambda_next = state.lambda;

    let first = PoissonSampler::new(lambda_next);
    let mut horizons = vec![HorizonForecast {
        h: 1,
        mean: lambda_next,
        mean_std_error: 0.0,
        q05: poisson_quantile(lambda_next, 0.05),
        q50: poisson_quantile(lambda_next, 0.50),
        q95: poisson_quantile(lambda_next, 0.95),
    }];
    if horizon == 1 {
        return Ok(ForecastResult { lambda_next, horizons, n_paths, seed });
    }

    let steps = horizon - 1;
    let mut counts = vec![0u64; n_paths * steps];
    let mut lambdas = vec![0.0f64; n_paths * steps];
    let mut rng = stream(seed);
    for p in 0..n_paths {
        let mut s = state.clone();
        let mut y = first.sample(&mut rng) as f64;
        for i in 0..steps {
            s.advance(theta, y, future_x.row(i), future_d.row(i));
            let draw = PoissonSampler::new(s.lambda).sample(&mut rng);
            lambdas[i * n_paths + p] = s.lambda;
            counts[i * n_paths + p] = draw;
            y = draw as f64;
        }
    }

    for i in 0..steps {
        let lam = &lambdas[i * n_paths..(i + 1) * n_paths];
        let mean = lam.iter().sum::<f64>() / n_paths as f64;
        let var =
            if n_paths > 1 { lam.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64 } else { 0.0 };
        let ys = &mut counts[i * n_paths..(i + 1) * n_paths];
        ys.sort_unstable();
        horizons.push(HorizonForecast {
            h: i + 2,
            mean,
            mean_std_error: (var / n_paths as f64).sqrt(),
            q05: empirical_quantile(ys, 0.05),
            q50: empirical_quantile(ys, 0.50),
            q95: empirical_quantile(ys, 0.95),
        });
    }
    Ok(ForecastResult { lambda_next, horizons, n_paths, seed })
}

/// Nearest-rank quantile of sorted data.
fn empirical_quantile(sorted: &[u64], p: f64) -> u64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Smallest `k` with `P(Y ≤ k) ≥ p` for `Y ~ Poisson(λ)`.
pub(crate) fn poisson_quantile(lambda: f64, p: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    // Start the walk ten standard deviations below the mean: the skipped
    // mass is under 1e-20 and large λ would underflow the leading terms.
    let sd = lambda.sqrt();
    let log_pmf = |k: f64| k * lambda.ln() - lambda - super::poisson::ln_factorial(k);
    let mut k = (lambda - 10.0 * sd).floor().max(0.0);
    let mut cdf = 0.0;
    loop {
        cdf += log_pmf(k).exp();
        if cdf >= p || k > lambda + 40.0 * sd + 50.0 {
            return k as u64;
        }
        k += 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{filter, FilterInit};

    fn empty(h: usize) -> RowMatrix {
        RowMatrix::zeros(h, 0)
    }

    #[test]
    fn constant_model_forecasts_its_level() {
        let th = ParamVector::par(2f64.ln(), 0.0, 0.0);
        let data = SeriesData::counts(vec![1, 5, 2, 0, 3]);
        let init = FilterInit { lambda1: 2.0, alpha1: 0.0, gamma1: vec![] };
        let path = filter(&data, &th, &init).unwrap();
        let f = forecast(&path, &data, &th, 5, 2000, 1, &empty(5), &empty(5)).unwrap();
        for h in &f.horizons {
            assert!((h.mean - 2.0).abs() < 1e-12, "h={} mean={}", h.h, h.mean);
        }
        assert_eq!(f.horizons[0].q50, 2);
    }

    #[test]
    fn one_step_does_not_depend_on_next_count() {
        let th = ParamVector::tv_par(0.1, 0.5, 0.05, 0.2, 0.1);
        let data = SeriesData::counts(vec![1, 3, 2]);
        let init = FilterInit { lambda1: 1.0, alpha1: 0.05, gamma1: vec![] };
        let path = filter(&data, &th, &init).unwrap();
        let f = forecast(&path, &data, &th, 1, 1, 0, &empty(1), &empty(1)).unwrap();
        for extra in [0u64, 4, 50] {
            let ext = SeriesData::counts(vec![1, 3, 2, extra]);
            let p = filter(&ext, &th, &init).unwrap();
            assert_eq!(p.lambda[3], f.lambda_next);
        }
    }

    #[test]
    fn poisson_quantiles() {
        // P(Y ≤ 0) = e^{-2} ≈ 0.135, P(Y ≤ 1) ≈ 0.406, P(Y ≤ 2) ≈ 0.677, P(Y ≤ 5) ≈ 0.983
        assert_eq!(poisson_quantile(2.0, 0.05), 0);
        assert_eq!(poisson_quantile(2.0, 0.5), 2);
        assert_eq!(poisson_quantile(2.0, 0.95), 5);
        let q = poisson_quantile(1.0e6, 0.5);
        assert!((q as f64 - 1.0e6).abs() <= 1.0);
    }

    #[test]
    fn shape_errors() {
        let mut th = ParamVector::par(0.0, 0.5, 0.1);
        th.gamma = vec![Default::default()];
        let x = RowMatrix::zeros(3, 1);
        let data = SeriesData::new(vec![1, 2, 3], x, RowMatrix::zeros(3, 0)).unwrap();
        let init = FilterInit { lambda1: 1.0, alpha1: 0.1, gamma1: vec![0.0] };
        let path = filter(&data, &th, &init).unwrap();
        let err = forecast(&path, &data, &th, 3, 10, 0, &RowMatrix::zeros(2, 1), &empty(3));
        assert!(matches!(err, Err(ModelError::DimensionMismatch(_))));
    }
}
