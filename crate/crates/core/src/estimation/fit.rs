use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::{covariance, CovarianceEstimate, CovarianceKind};
use super::criteria::{information_criteria, InformationCriteria};
use super::optimize::{minimize, MinimizeOptions, Minimum};
use super::{numdiff, EstimationError, TransformMap};
use crate::diagnostics::{check_invertibility, check_stationarity, InvertibilityReport, StationarityReport};
use crate::model::filter::loglik_unchecked;
use crate::model::rng::{split_seed, stream};
use crate::model::{
    default_init, filter, FilterInit, FilterPath, ModelSpec, ParamId, ParamVector, RowMatrix, SeriesData, LAMBDA_FLOOR,
};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    /// Convergence threshold on the gradient norm of the mean
    /// log-likelihood in unconstrained coordinates.
    pub grad_tol: f64,
    pub param_tol: f64,
    /// Relative step of the central-difference gradient.
    pub fd_step_rel: f64,
    /// Relative step of the central-difference Hessian.
    pub hess_step_rel: f64,
    pub seed: u64,
    /// `None` skips the covariance computation.
    pub covariance: Option<CovarianceKind>,
    /// Standard deviation of the start jitter in unconstrained coordinates.
    pub jitter_scale: f64,
    /// Require at least this many observations per free parameter.
    pub min_obs_per_param: usize,
    /// Extra starting points tried after the jittered ones.
    pub warm_starts: Vec<ParamVector>,
    /// Run the starts on the rayon pool.
    pub parallel: bool,
    /// Rank a coarse grid of dynamic-coefficient values by likelihood and
    /// start from the best points.
    pub screen: bool,
    /// Also start from fits on this many contiguous blocks of the sample,
    /// when each block is long enough on its own (0 disables).
    pub block_starts: usize,
    /// BFGS restarts from the best point when it has not converged.
    pub polish_restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iter: 500,
            grad_tol: 1e-5,
            param_tol: 1e-10,
            fd_step_rel: numdiff::default_gradient_step(),
            hess_step_rel: numdiff::default_hessian_step(),
            seed: 0,
            covariance: Some(CovarianceKind::Both),
            jitter_scale: 0.25,
            min_obs_per_param: 10,
            warm_starts: Vec::new(),
            parallel: true,
            screen: true,
            block_starts: 4,
            polish_restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    #[serde(with = "crate::serde_float")]
    pub grad_norm: f64,
    pub evaluations: usize,
    pub fallbacks: usize,
    pub best_start: usize,
    pub n_starts: usize,
    /// Final unnormalized log-likelihood reached from each start.
    #[serde(with = "crate::serde_float::vec")]
    pub start_logliks: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub theta_hat: ParamVector,
    /// Names of the free parameters, in the order of `std_errors`.
    pub param_names: Vec<String>,
    pub param_ids: Vec<ParamId>,
    /// Unnormalized log-likelihood at `theta_hat`.
    pub loglik: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub criteria: InformationCriteria,
    pub covariance: Option<CovarianceEstimate>,
    pub std_errors: Vec<f64>,
    pub init: FilterInit,
    pub path: FilterPath,
    pub convergence: ConvergenceReport,
    pub stationarity: Option<StationarityReport>,
    pub invertibility: Option<InvertibilityReport>,
}

impl FitResult {
    pub fn std_error(&self, id: ParamId) -> Option<f64> {
        self.param_ids.iter().position(|p| *p == id).and_then(|i| self.std_errors.get(i).copied())
    }

    /// `sqrt(mean (y_t − λ̂_t)²)`.
    pub fn rmse_in_sample(&self, data: &SeriesData) -> f64 {
        let n = data.len() as f64;
        (data.y.iter().zip(&self.path.lambda).map(|(&y, l)| (y as f64 - l).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Moment-matched starting point: `β = 0.9`, `ω = (1 − β) log ȳ`, with the
/// dynamic blocks at moderate persistence.
pub fn moment_start(data: &SeriesData, spec: &ModelSpec) -> ParamVector {
    let beta = 0.9;
    let mut th = ParamVector {
        omega: (1.0 - beta) * data.mean_y().max(LAMBDA_FLOOR).ln(),
        beta,
        psi: vec![0.0; spec.n_deterministics],
        gamma: vec![Default::default(); spec.n_covariates],
        ..Default::default()
    };
    if spec.alpha_time_varying {
        th.delta_alpha = 0.1;
        th.phi_alpha = 0.5;
        th.kappa_alpha = 0.05;
    } else {
        th.delta_alpha = 0.2;
    }
    for (g, &tv) in th.gamma.iter_mut().zip(&spec.gamma_time_varying) {
        if tv {
            g.phi = 0.5;
        }
    }
    th
}

/// Estimates from fits on contiguous blocks of the sample. A rare burst in
/// one block leaves the others' estimates near the bulk of the data.
fn block_estimates(data: &SeriesData, spec: &ModelSpec, opts: &FitOptions) -> Vec<ParamVector> {
    let b = opts.block_starts;
    if b < 2 {
        return Vec::new();
    }
    let len = data.len() / b;
    if len < (opts.min_obs_per_param * spec.n_free()).max(500) {
        return Vec::new();
    }
    let sub = FitOptions {
        n_starts: 2,
        covariance: None,
        warm_starts: Vec::new(),
        parallel: false,
        block_starts: 0,
        polish_restarts: 0,
        ..opts.clone()
    };
    let run = |i: usize| {
        let rows = i * len..(i + 1) * len;
        let cut = |m: &RowMatrix| {
            RowMatrix::from_row_major(len, m.cols(), m.as_slice()[rows.start * m.cols()..rows.end * m.cols()].to_vec())
        };
        let block = SeriesData::new(data.y[rows.clone()].to_vec(), cut(&data.x).ok()?, cut(&data.dmat).ok()?).ok()?;
        fit(&block, spec, &sub).ok().map(|r| r.theta_hat)
    };
    if opts.parallel {
        (0..b).into_par_iter().filter_map(run).collect()
    } else {
        (0..b).filter_map(run).collect()
    }
}

/// Coarse grid over persistence and the dynamic α block, with `ω` set so
/// the unconditional log-intensity matches the sample mean.
fn screening_grid(data: &SeriesData, spec: &ModelSpec) -> Vec<ParamVector> {
    let base = moment_start(data, spec);
    let log_mean = data.mean_y().max(LAMBDA_FLOOR).ln();
    let mut out = Vec::new();
    for beta in [0.5, 0.75, 0.9, 0.97] {
        let mut th = base.clone();
        th.beta = beta;
        th.omega = (1.0 - beta) * log_mean;
        if spec.alpha_time_varying {
            for phi in [0.0, 0.45, 0.85] {
                for alpha_bar in [0.03, 0.15, 0.4] {
                    for kappa in [0.02, 0.07, 0.2] {
                        let mut t = th.clone();
                        t.phi_alpha = phi;
                        t.delta_alpha = alpha_bar * (1.0 - phi);
                        t.kappa_alpha = kappa;
                        out.push(t);
                    }
                }
            }
        } else {
            for alpha in [0.05, 0.15, 0.4] {
                let mut t = th.clone();
                t.delta_alpha = alpha;
                out.push(t);
            }
        }
    }
    out
}

/// Negative mean log-likelihood in unconstrained coordinates.
fn objective(data: &SeriesData, map: &TransformMap, u: &[f64]) -> f64 {
    let th = map.from_unconstrained(u);
    if th.check_finite().is_err() {
        return f64::INFINITY;
    }
    let init = default_init(data, &th);
    -loglik_unchecked(data, &th, &init) / data.len() as f64
}

/// Poisson QMLE of the free parameters of `spec`.
///
/// Every start is a full BFGS run; the best local optimum wins, ties going
/// to the lower start index. A fit whose final gradient norm is above
/// `grad_tol` is returned with `convergence.converged = false`.
pub fn fit(data: &SeriesData, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult, EstimationError> {
    spec.validate()?;
    if data.n_covariates() != spec.n_covariates || data.n_deterministics() != spec.n_deterministics {
        return Err(EstimationError::Spec(format!(
            "data has {} covariates and {} deterministics, model expects {} and {}",
            data.n_covariates(),
            data.n_deterministics(),
            spec.n_covariates,
            spec.n_deterministics
        )));
    }
    let map = TransformMap::new(spec);
    let k = map.len();
    let n = data.len();
    let required = (opts.min_obs_per_param * k).max(3);
    if n < required {
        return Err(EstimationError::InsufficientData { n_obs: n, required });
    }
    if data.y.iter().all(|&y| y == 0) {
        return Err(EstimationError::DegenerateData);
    }
    if opts.n_starts == 0 {
        return Err(EstimationError::Spec("n_starts must be at least 1".into()));
    }

    let moment = map.to_unconstrained(&moment_start(data, spec))?;
    let mut ranked: Vec<(f64, Vec<f64>)> = vec![(objective(data, &map, &moment), moment)];
    if opts.screen {
        for th in screening_grid(data, spec) {
            let u = map.to_unconstrained(&th)?;
            ranked.push((objective(data, &map, &u), u));
        }
    }
    // stable: equal values keep grid order
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_ranked = (opts.n_starts / 2).max(1).min(ranked.len());
    let mut starts: Vec<Vec<f64>> = ranked.into_iter().take(n_ranked).map(|(_, u)| u).collect();
    let base = starts[0].clone();
    for s in n_ranked..opts.n_starts {
        let mut rng = stream(split_seed(opts.seed, s as u64));
        starts.push(
            base.iter()
                .map(|b| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    b + opts.jitter_scale * z
                })
                .collect(),
        );
    }
    let mut warm = opts.warm_starts.clone();
    warm.extend(block_estimates(data, spec, opts));
    for w in &warm {
        let mut w = w.clone();
        spec.apply_nesting(&mut w);
        if let Ok(u) = map.to_unconstrained(&w) {
            starts.push(u);
        }
    }

    let mopts = MinimizeOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        param_tol: opts.param_tol,
        fd_step_rel: opts.fd_step_rel,
        ..Default::default()
    };
    let run = |u0: &Vec<f64>| minimize(|u| objective(data, &map, u), u0, &mopts);
    let results: Vec<Minimum> =
        if opts.parallel { starts.par_iter().map(run).collect() } else { starts.iter().map(run).collect() };

    let (best_start, first_best) = results
        .iter()
        .enumerate()
        .fold(None::<(usize, &Minimum)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.fx <= r.fx => acc,
            _ if r.fx.is_finite() => Some((i, r)),
            _ => acc,
        })
        .ok_or_else(|| EstimationError::Domain("no start produced a finite likelihood".into()))?;
    let mut best = first_best.clone();
    let mut extra_evals = 0;
    for _ in 0..opts.polish_restarts {
        if best.converged {
            break;
        }
        let again = run(&best.x);
        extra_evals += again.evaluations;
        let improved = again.fx < best.fx;
        if again.fx <= best.fx {
            best = Minimum { iterations: best.iterations + again.iterations, ..again };
        }
        if !improved {
            break;
        }
    }
    let best = &best;

    let theta_hat = map.from_unconstrained(&best.x);
    let init = default_init(data, &theta_hat);
    let path = filter(data, &theta_hat, &init)?;
    let loglik = path.loglik();

    let cov = match opts.covariance {
        Some(kind) => Some(covariance(data, &theta_hat, &map, kind, opts.hess_step_rel, opts.fd_step_rel)?),
        None => None,
    };
    let std_errors = cov.as_ref().map(CovarianceEstimate::std_errors).unwrap_or_default();

    let convergence = ConvergenceReport {
        converged: best.converged,
        iterations: best.iterations,
        grad_norm: best.grad_norm,
        evaluations: results.iter().map(|r| r.evaluations).sum::<usize>() + extra_evals,
        fallbacks: best.fallbacks,
        best_start,
        n_starts: results.len(),
        start_logliks: results.iter().map(|r| -r.fx * n as f64).collect(),
    };

    Ok(FitResult {
        spec: spec.clone(),
        param_names: map.names(),
        param_ids: map.ids().to_vec(),
        loglik,
        n_obs: n,
        n_params: k,
        criteria: information_criteria(loglik, k, n),
        covariance: cov,
        std_errors,
        stationarity: check_stationarity(&theta_hat).ok(),
        invertibility: if spec.alpha_time_varying { check_invertibility(&theta_hat, data).ok() } else { None },
        theta_hat,
        init,
        path,
        convergence,
    })
}
