use super::filter::FilterState;
use super::poisson::PoissonSampler;
use super::rng::stream;
use super::{FilterInit, FilterPath, ModelError, ParamVector, RowMatrix, SeriesData};

#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    /// Largest tolerated fraction of periods whose log-intensity hits the
    /// upper clamp before the run is rejected as explosive.
    pub max_saturation_fraction: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { max_saturation_fraction: 0.01 }
    }
}

/// A simulated series together with its true latent path.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub data: SeriesData,
    pub path: FilterPath,
}

/// Draw `y_t ~ Poisson(λ_t)` period by period, feeding each draw back into
/// the filter recursion.
pub fn simulate(
    theta: &ParamVector,
    n: usize,
    x: RowMatrix,
    dmat: RowMatrix,
    init: &FilterInit,
    seed: u64,
) -> Result<Simulation, ModelError> {
    simulate_with(theta, n, x, dmat, init, seed, SimulateOptions::default())
}

pub fn simulate_with(
    theta: &ParamVector,
    n: usize,
    x: RowMatrix,
    dmat: RowMatrix,
    init: &FilterInit,
    seed: u64,
    opts: SimulateOptions,
) -> Result<Simulation, ModelError> {
    if n < 3 {
        return Err(ModelError::TooShort { min: 3, got: n });
    }
    theta.check_finite()?;
    init.validate()?;
    let mut data = SeriesData::new(vec![0; n], x, dmat)?;
    data.check_against(theta)?;
    if init.gamma1.len() != theta.n_covariates() {
        return Err(ModelError::DimensionMismatch(format!(
            "init has {} covariate coefficients, parameters have {}",
            init.gamma1.len(),
            theta.n_covariates()
        )));
    }

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
    let mut rng = stream(seed);
    let mut state = FilterState::new(init);
    for t in 0..n {
        let draw = PoissonSampler::new(state.lambda).sample(&mut rng);
        data.y[t] = draw;
        let y = draw as f64;
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

    let limit = opts.max_saturation_fraction;
    if path.saturated as f64 > limit * n as f64 {
        return Err(ModelError::OverflowGuard { saturated: path.saturated, total: n, limit });
    }
    Ok(Simulation { data, path })
}
