//! Finite-sample comparison of TV-PAR and static PAR on a step-function
//! intensity.
//!
//! Each replication draws `y_t ~ Poisson(λ⁰_t)` independently over `t`,
//! fits both models, and scores the filtered intensity against `λ⁰`.
//! Replication `r` of every cell uses the stream `split_seed(base_seed, r)`,
//! so cells share common random numbers and the whole table is identical for
//! any number of threads.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{fit, FitOptions};
use crate::model::poisson::PoissonSampler;
use crate::model::rng::{split_seed, stream};
use crate::model::{ModelSpec, ParamVector, SeriesData};

/// Share of failed replications above which a cell is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDgpConfig {
    pub delta: f64,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub n_obs: usize,
}

impl StepDgpConfig {
    pub fn new(delta: f64, gamma: f64, n_obs: usize) -> Result<Self, MonteCarloError> {
        if n_obs < 3 {
            return Err(MonteCarloError::Config(format!("T must be at least 3, got {n_obs}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) || !delta.is_finite() {
            return Err(MonteCarloError::Config(format!("need finite delta and gamma > 0, got {delta}, {gamma}")));
        }
        Ok(Self { delta, gamma, n_obs })
    }
}

/// `λ⁰_t = 2` if `sin(γ⁻¹ · 10⁻² · (π t − 1)) ≥ 0`, else `2 + δ`, for
/// `t = 1..=T`.
pub fn step_lambda(cfg: &StepDgpConfig) -> Vec<f64> {
    (1..=cfg.n_obs)
        .map(|t| {
            let arg = (std::f64::consts::PI * t as f64 - 1.0) * 1e-2 / cfg.gamma;
            if arg.sin() >= 0.0 {
                2.0
            } else {
                2.0 + cfg.delta
            }
        })
        .collect()
}

/// Every (δ, γ, T) combination, ordered by T, then δ, then γ.
pub fn grid(deltas: &[f64], gammas: &[f64], sizes: &[usize]) -> Result<Vec<StepDgpConfig>, MonteCarloError> {
    let mut out = Vec::new();
    for &n in sizes {
        for &d in deltas {
            for &g in gammas {
                out.push(StepDgpConfig::new(d, g, n)?);
            }
        }
    }
    if out.is_empty() {
        return Err(MonteCarloError::Config("empty grid".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum McModel {
    #[serde(rename = "PAR")]
    Par,
    #[serde(rename = "TV-PAR")]
    TvPar,
}

impl McModel {
    pub const ALL: [McModel; 2] = [McModel::Par, McModel::TvPar];

    pub fn label(self) -> &'static str {
        match self {
            McModel::Par => "PAR",
            McModel::TvPar => "TV-PAR",
        }
    }
}

/// How a cell's replications are reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RmseMetric {
    /// Mean over replications of `sqrt(mean_t (λ̂_t − λ⁰_t)²)`.
    Replication,
    /// RMSE of the replication-mean path `mean_r λ̂_t` against `λ⁰_t`.
    #[default]
    MeanPath,
}

#[derive(Debug, Clone)]
pub struct McOptions {
    pub reps: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses the current rayon pool.
    pub threads: Option<usize>,
    pub fit: FitOptions,
    /// Keep per-replication paths for confidence bands.
    pub keep_bands: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            reps: 200,
            base_seed: 0,
            threads: None,
            fit: FitOptions { n_starts: 2, covariance: None, parallel: false, ..FitOptions::default() },
            keep_bands: false,
        }
    }
}

/// Pointwise summary of `λ̂_t` across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCell {
    pub model: McModel,
    /// Per-replication RMSE; `None` where the fit failed.
    pub rmse: Vec<Option<f64>>,
    pub mean_rmse: f64,
    pub mean_path_rmse: f64,
    pub n_ok: usize,
    pub n_fail: usize,
    pub n_not_converged: usize,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands: Option<Bands>,
}

impl ModelCell {
    pub fn value(&self, metric: RmseMetric) -> f64 {
        match metric {
            RmseMetric::Replication => self.mean_rmse,
            RmseMetric::MeanPath => self.mean_path_rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: StepDgpConfig,
    pub models: Vec<ModelCell>,
}

impl CellResult {
    pub fn model(&self, m: McModel) -> &ModelCell {
        self.models.iter().find(|c| c.model == m).expect("both models are always present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub reps: usize,
    pub base_seed: u64,
    pub n_starts: usize,
    pub cells: Vec<CellResult>,
}

/// `sqrt(mean (a_t − b_t)²)`.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).collect();
    (pairwise_sum(&sq) / truth.len() as f64).sqrt()
}

/// Pairwise summation; the result depends only on the order of `v`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

struct RepOutcome {
    // indexed like McModel::ALL
    paths: [Option<Vec<f64>>; 2],
    converged: [bool; 2],
}

fn draw_counts(lambda0: &[f64], seed: u64) -> Vec<u64> {
    let mut rng = stream(seed);
    lambda0.iter().map(|&l| PoissonSampler::new(l).sample(&mut rng)).collect()
}

fn run_replication(lambda0: &[f64], rep: usize, opts: &McOptions) -> RepOutcome {
    let seed = split_seed(opts.base_seed, rep as u64);
    let data = SeriesData::counts(draw_counts(lambda0, seed));
    let fit_opts = FitOptions { seed: split_seed(seed, u64::MAX), ..opts.fit.clone() };

    let par = fit(&data, &ModelSpec::par(), &fit_opts).ok();
    // The static optimum, with a small κ_α, seeds one TV-PAR start so the
    // nested model never fits worse than the restricted one.
    let mut tv_opts = fit_opts.clone();
    if let Some(p) = &par {
        let mut w: ParamVector = p.theta_hat.clone();
        w.kappa_alpha = 1e-3;
        tv_opts.warm_starts.push(w);
    }
    let tv = fit(&data, &ModelSpec::tv_par(), &tv_opts).ok();

    RepOutcome {
        converged: [
            par.as_ref().is_some_and(|r| r.convergence.converged),
            tv.as_ref().is_some_and(|r| r.convergence.converged),
        ],
        paths: [par.map(|r| r.path.lambda), tv.map(|r| r.path.lambda)],
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    // linear interpolation between order statistics
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(model: McModel, idx: usize, lambda0: &[f64], reps: &[RepOutcome], keep_bands: bool) -> ModelCell {
    let rmse_per_rep: Vec<Option<f64>> = reps.iter().map(|r| r.paths[idx].as_ref().map(|p| rmse(p, lambda0))).collect();
    let ok: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.paths[idx].as_ref()).collect();
    let n_ok = ok.len();
    let n_fail = reps.len() - n_ok;
    let ok_rmse: Vec<f64> = rmse_per_rep.iter().flatten().copied().collect();
    let mean_rmse = if n_ok > 0 { pairwise_sum(&ok_rmse) / n_ok as f64 } else { f64::NAN };

    let n = lambda0.len();
    let mut column = vec![0.0; n_ok];
    let mut mean = vec![0.0; n];
    let (mut lower, mut upper) = (vec![0.0; n], vec![0.0; n]);
    for t in 0..n {
        for (c, p) in column.iter_mut().zip(&ok) {
            *c = p[t];
        }
        mean[t] = if n_ok > 0 { pairwise_sum(&column) / n_ok as f64 } else { f64::NAN };
        if keep_bands && n_ok > 0 {
            let mut s = column.clone();
            s.sort_by(f64::total_cmp);
            lower[t] = percentile(&s, 0.025);
            upper[t] = percentile(&s, 0.975);
        }
    }
    let mean_path_rmse = if n_ok > 0 { rmse(&mean, lambda0) } else { f64::NAN };

    ModelCell {
        model,
        rmse: rmse_per_rep,
        mean_rmse,
        mean_path_rmse,
        n_ok,
        n_fail,
        n_not_converged: reps.iter().filter(|r| r.paths[idx].is_some() && !r.converged[idx]).count(),
        flagged: n_fail as f64 > FAILURE_FLAG_FRACTION * reps.len() as f64,
        bands: keep_bands.then_some(Bands { mean, lower, upper }),
    }
}

fn aggregate(cfg: StepDgpConfig, lambda0: &[f64], reps: &[RepOutcome], keep_bands: bool) -> CellResult {
    CellResult {
        config: cfg,
        models: McModel::ALL.iter().enumerate().map(|(i, &m)| summarize(m, i, lambda0, reps, keep_bands)).collect(),
    }
}

/// Run `opts.reps` replications of a single cell.
pub fn run_cell(cfg: &StepDgpConfig, opts: &McOptions) -> Result<CellResult, MonteCarloError> {
    Ok(run_table(std::slice::from_ref(cfg), opts)?.cells.remove(0))
}

/// Run every cell of `grid`. Replications of all cells share one work queue.
pub fn run_table(grid: &[StepDgpConfig], opts: &McOptions) -> Result<McResult, MonteCarloError> {
    if grid.is_empty() {
        return Err(MonteCarloError::Config("empty grid".into()));
    }
    if opts.reps == 0 {
        return Err(MonteCarloError::Config("need at least one replication".into()));
    }
    let lambdas: Vec<Vec<f64>> = grid.iter().map(step_lambda).collect();
    // Cells with the same λ⁰ see the same draws, so each distinct path is
    // simulated and fitted once (all δ = 0 cells of a given T coincide).
    let mut distinct: Vec<usize> = Vec::new();
    let slot: Vec<usize> = lambdas
        .iter()
        .map(|l| match distinct.iter().position(|&d| lambdas[d] == *l) {
            Some(p) => p,
            None => {
                distinct.push(lambdas.iter().position(|o| o == l).expect("present"));
                distinct.len() - 1
            }
        })
        .collect();
    let jobs: Vec<(usize, usize)> = distinct.iter().flat_map(|&c| (0..opts.reps).map(move |r| (c, r))).collect();

    let work = || -> Vec<RepOutcome> { jobs.par_iter().map(|&(c, r)| run_replication(&lambdas[c], r, opts)).collect() };
    let outcomes = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build()?.install(work),
        None => work(),
    };

    let cells = grid
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let k = slot[c];
            let reps = &outcomes[k * opts.reps..(k + 1) * opts.reps];
            aggregate(*cfg, &lambdas[c], reps, opts.keep_bands)
        })
        .collect();
    Ok(McResult { reps: opts.reps, base_seed: opts.base_seed, n_starts: opts.fit.n_starts, cells })
}

impl McResult {
    /// CSV with header `delta,gamma,T,model,mean_rmse,n_ok,n_fail`.
    pub fn to_csv(&self, metric: RmseMetric) -> Result<String, MonteCarloError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["delta", "gamma", "T", "model", "mean_rmse", "n_ok", "n_fail"])?;
        for cell in &self.cells {
            for m in &cell.models {
                w.write_record([
                    cell.config.delta.to_string(),
                    cell.config.gamma.to_string(),
                    cell.config.n_obs.to_string(),
                    m.model.label().to_string(),
                    m.value(metric).to_string(),
                    m.n_ok.to_string(),
                    m.n_fail.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| MonteCarloError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Long-format band data: `delta,gamma,T,model,t,lambda0,mean,lower,upper`.
    pub fn bands_csv(&self) -> Result<String, MonteCarloError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["delta", "gamma", "T", "model", "t", "lambda0", "mean", "lower", "upper"])?;
        for cell in &self.cells {
            let lambda0 = step_lambda(&cell.config);
            for m in &cell.models {
                let Some(b) = &m.bands else { continue };
                for (t, l0) in lambda0.iter().enumerate() {
                    w.write_record([
                        cell.config.delta.to_string(),
                        cell.config.gamma.to_string(),
                        cell.config.n_obs.to_string(),
                        m.model.label().to_string(),
                        (t + 1).to_string(),
                        l0.to_string(),
                        b.mean[t].to_string(),
                        b.lower[t].to_string(),
                        b.upper[t].to_string(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| MonteCarloError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Human-readable table: one block per T, rows δ, columns γ × model.
    pub fn format_table(&self, metric: RmseMetric) -> String {
        let mut gammas: Vec<f64> = Vec::new();
        let mut deltas: Vec<f64> = Vec::new();
        let mut sizes: Vec<usize> = Vec::new();
        for c in &self.cells {
            if !gammas.contains(&c.config.gamma) {
                gammas.push(c.config.gamma);
            }
            if !deltas.contains(&c.config.delta) {
                deltas.push(c.config.delta);
            }
            if !sizes.contains(&c.config.n_obs) {
                sizes.push(c.config.n_obs);
            }
        }
        let mut s = String::new();
        let _ = write!(s, "{:>10}", "");
        for g in &gammas {
            let _ = write!(s, " | gamma={g:<17}");
        }
        s.push('\n');
        let _ = write!(s, "{:>10}", "");
        for _ in &gammas {
            let _ = write!(s, " | {:>8} {:>8}", "PAR", "TV-PAR");
        }
        s.push('\n');
        for n in &sizes {
            let _ = writeln!(s, "T={n}");
            for d in &deltas {
                let _ = write!(s, "{:>10}", format!("delta={d}"));
                for g in &gammas {
                    match self
                        .cells
                        .iter()
                        .find(|c| c.config.n_obs == *n && c.config.delta == *d && c.config.gamma == *g)
                    {
                        Some(c) => {
                            let _ = write!(
                                s,
                                " | {:>8.4} {:>8.4}",
                                c.model(McModel::Par).value(metric),
                                c.model(McModel::TvPar).value(metric)
                            );
                        }
                        None => {
                            let _ = write!(s, " | {:>8} {:>8}", "-", "-");
                        }
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}
