//! `tvparx`: simulate, fit, filter and forecast TV-PARX models, and run the
//! step-intensity Monte Carlo study.
//!
//! Exit codes: 0 success, 2 usage error, 3 fit did not converge (output is
//! still written), 4 data error, 1 any other failure. Errors are reported on
//! stderr as a single line `tvparx: error=<kind> exit=<code> message="..."`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tvparx_core::estimation::{CovarianceKind, EstimationError};
use tvparx_core::io::{self, Dataset, FitReport, IoError, LoadOptions};
use tvparx_core::model::{FilterInit, ModelSpec, RowMatrix};
use tvparx_core::montecarlo::{self, McOptions, MonteCarloError, RmseMetric};
use tvparx_core::{default_init, filter, fit, forecast, simulate, FitOptions, ModelError};

#[derive(Parser, Debug)]
#[command(name = "tvparx", version, about = "Time-varying Poisson autoregressions with exogenous covariates")]
struct Cli {
    /// Worker threads for multi-start fits and Monte Carlo runs.
    #[arg(long, global = true, env = "TVPARX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ModelArg {
    /// Time-varying α and γ.
    TvParx,
    /// Static α and γ.
    Parx,
    /// Time-varying α, covariates and deterministics dropped.
    TvPar,
    /// Static α, covariates and deterministics dropped.
    Par,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MetricArg {
    /// RMSE of the replication-mean filtered path.
    MeanPath,
    /// Mean of per-replication RMSEs.
    Replication,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a series from given parameters.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long = "T", alias = "t")]
        n_obs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV with `x:`/`d:` columns; the first T rows are used.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Append the latent intensity as a `lambda` column.
        #[arg(long)]
        with_latent: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a model by Poisson QMLE.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "tv-parx")]
        model: ModelArg,
        /// Covariates (by name) whose γ is held constant.
        #[arg(long, value_delimiter = ',')]
        no_tv_gamma: Vec<String>,
        /// Use only these covariate columns.
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
        /// Use only these deterministic columns.
        #[arg(long, value_delimiter = ',')]
        deterministics: Option<Vec<String>>,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Skip standard errors.
        #[arg(long)]
        no_covariance: bool,
        /// Include the filtered paths in the report.
        #[arg(long)]
        paths: bool,
        /// Print a parameter table to stderr.
        #[arg(long)]
        summary: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the filter at fixed parameters.
    Filter {
        #[arg(long)]
        input: PathBuf,
        /// Parameter JSON or a fit report.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast the intensity and counts beyond the sample.
    Forecast {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Future `x:`/`d:` rows for periods T+1, T+2, ...
        #[arg(long)]
        future: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo comparison of TV-PAR and PAR on step intensities.
    Mc {
        #[arg(long, value_delimiter = ',', default_value = "0,2,4")]
        delta_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2")]
        gamma_list: Vec<f64>,
        #[arg(long = "T-list", alias = "t-list", value_delimiter = ',', default_value = "250,500,1000")]
        t_list: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optimizer starts per fit.
        #[arg(long, default_value_t = 2)]
        starts: usize,
        /// Value written to the `mean_rmse` column.
        #[arg(long, value_enum, default_value = "mean-path")]
        metric: MetricArg,
        /// Full results, both metrics, as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Pointwise mean and 2.5/97.5 percentile bands of the filtered paths.
        #[arg(long)]
        bands: Option<PathBuf>,
        /// Print the table layout to stderr.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
}

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Self { kind: "usage", code: 2, message: m.into() }
    }
    fn data(m: impl Into<String>) -> Self {
        Self { kind: "data", code: 4, message: m.into() }
    }
    fn other(m: impl Into<String>) -> Self {
        Self { kind: "internal", code: 1, message: m.into() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<EstimationError> for Failure {
    fn from(e: EstimationError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<MonteCarloError> for Failure {
    fn from(e: MonteCarloError) -> Self {
        match e {
            MonteCarloError::Config(m) => Failure::usage(m),
            other => Failure::other(other.to_string()),
        }
    }
}

fn read_to_string(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::other(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path, opts: &LoadOptions) -> Result<Dataset, Failure> {
    io::load_csv(path, opts).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_params(path: &Path) -> Result<(tvparx_core::ParamVector, Option<FilterInit>), Failure> {
    io::read_params(&read_to_string(path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn first_rows(m: &RowMatrix, n: usize) -> Result<RowMatrix, Failure> {
    Ok(RowMatrix::from_row_major(n, m.cols(), m.as_slice()[..n * m.cols()].to_vec())?)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        // An already-initialized pool only happens in-process; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate { params, n_obs, seed, covariates, with_latent, out } => {
            let (theta, init) = read_params(&params)?;
            let (x, d, xn, dn) = match &covariates {
                Some(p) => {
                    let ds = io::load_regressors(p, &LoadOptions::default())
                        .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
                    if ds.data.len() < n_obs {
                        return Err(Failure::data(format!("covariate file has {} rows, need {n_obs}", ds.data.len())));
                    }
                    (
                        first_rows(&ds.data.x, n_obs)?,
                        first_rows(&ds.data.dmat, n_obs)?,
                        ds.covariate_names,
                        ds.deterministic_names,
                    )
                }
                None => (RowMatrix::zeros(n_obs, 0), RowMatrix::zeros(n_obs, 0), vec![], vec![]),
            };
            let init = init.unwrap_or_else(|| FilterInit::unconditional(&theta));
            let sim = simulate(&theta, n_obs, x, d, &init, seed)?;
            let ds = Dataset { data: sim.data, covariate_names: xn, deterministic_names: dn, ignored_columns: vec![] };
            let text = io::series_csv(&ds, with_latent.then_some(sim.path.lambda.as_slice()))?;
            emit(&out, &text)?;
            Ok(0)
        }
        Command::Fit {
            input,
            model,
            no_tv_gamma,
            covariates,
            deterministics,
            starts,
            seed,
            max_iter,
            no_covariance,
            paths,
            summary,
            out,
        } => {
            if starts == 0 {
                return Err(Failure::usage("--starts must be at least 1"));
            }
            let mut lo = LoadOptions { covariates, deterministics };
            if matches!(model, ModelArg::TvPar | ModelArg::Par) {
                lo = LoadOptions { covariates: Some(vec![]), deterministics: Some(vec![]) };
            }
            let ds = load(&input, &lo)?;
            let (m, dd) = (ds.data.n_covariates(), ds.data.n_deterministics());
            let mut spec = match model {
                ModelArg::TvParx | ModelArg::TvPar => ModelSpec::tv_parx(m, dd),
                ModelArg::Parx | ModelArg::Par => ModelSpec::parx(m, dd),
            };
            for name in &no_tv_gamma {
                let j = ds
                    .covariate_names
                    .iter()
                    .position(|c| c == name || format!("{}{c}", io::COVARIATE_PREFIX) == *name)
                    .ok_or_else(|| Failure::usage(format!("--no-tv-gamma: unknown covariate {name:?}")))?;
                spec.gamma_time_varying[j] = false;
            }
            let opts = FitOptions {
                n_starts: starts,
                seed,
                max_iter,
                covariance: (!no_covariance).then_some(CovarianceKind::Both),
                ..FitOptions::default()
            };
            let res = fit(&ds.data, &spec, &opts)?;
            let report = FitReport::new(&res, &ds, seed, paths);
            emit(&out, &report.to_json()?)?;
            if summary {
                eprint!("{}", io::format_fit_summary(&report));
            }
            if res.convergence.converged {
                Ok(0)
            } else {
                eprintln!(
                    "tvparx: error=not_converged exit=3 message=\"gradient norm {} above tolerance\"",
                    res.convergence.grad_norm
                );
                Ok(3)
            }
        }
        Command::Filter { input, params, out } => {
            let ds = load(&input, &LoadOptions::default())?;
            let (theta, init) = read_params(&params)?;
            ds.data.check_against(&theta)?;
            let init = init.unwrap_or_else(|| default_init(&ds.data, &theta));
            let path = filter(&ds.data, &theta, &init)?;
            emit(&out, &io::path_csv(&ds, &path)?)?;
            Ok(0)
        }
        Command::Forecast { input, params, horizon, paths, seed, future, out } => {
            if horizon == 0 || paths == 0 {
                return Err(Failure::usage("--horizon and --paths must be at least 1"));
            }
            let ds = load(&input, &LoadOptions::default())?;
            let (theta, init) = read_params(&params)?;
            ds.data.check_against(&theta)?;
            let init = init.unwrap_or_else(|| default_init(&ds.data, &theta));
            let path = filter(&ds.data, &theta, &init)?;
            let (fx, fd) = match &future {
                Some(p) => {
                    let f = io::load_regressors(p, &LoadOptions::default())
                        .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
                    (f.data.x, f.data.dmat)
                }
                None => (
                    RowMatrix::zeros(horizon, ds.data.n_covariates()),
                    RowMatrix::zeros(horizon, ds.data.n_deterministics()),
                ),
            };
            let fc = forecast(&path, &ds.data, &theta, horizon, paths, seed, &fx, &fd)?;
            let mut text = serde_json::to_string_pretty(&fc).map_err(|e| Failure::other(e.to_string()))?;
            text.push('\n');
            emit(&out, &text)?;
            Ok(0)
        }
        Command::Mc { delta_list, gamma_list, t_list, reps, seed, starts, metric, json, bands, table, out } => {
            if reps == 0 || starts == 0 {
                return Err(Failure::usage("--reps and --starts must be at least 1"));
            }
            let grid = montecarlo::grid(&delta_list, &gamma_list, &t_list)?;
            let mut opts = McOptions {
                reps,
                base_seed: seed,
                threads: cli.threads,
                keep_bands: bands.is_some(),
                ..McOptions::default()
            };
            opts.fit.n_starts = starts;
            let res = montecarlo::run_table(&grid, &opts)?;
            let metric = match metric {
                MetricArg::MeanPath => RmseMetric::MeanPath,
                MetricArg::Replication => RmseMetric::Replication,
            };
            emit(&out, &res.to_csv(metric)?)?;
            if let Some(p) = &bands {
                emit(&Some(p.clone()), &res.bands_csv()?)?;
            }
            if let Some(p) = &json {
                let mut slim = res.clone();
                for c in &mut slim.cells {
                    for m in &mut c.models {
                        m.bands = None;
                    }
                }
                let mut text = serde_json::to_string_pretty(&slim).map_err(|e| Failure::other(e.to_string()))?;
                text.push('\n');
                emit(&Some(p.clone()), &text)?;
            }
            if table {
                eprint!("{}", res.format_table(metric));
            }
            for c in &res.cells {
                for m in &c.models {
                    if m.flagged {
                        eprintln!(
                            "tvparx: warning=failures delta={} gamma={} T={} model={} n_fail={}",
                            c.config.delta,
                            c.config.gamma,
                            c.config.n_obs,
                            m.model.label(),
                            m.n_fail
                        );
                    }
                }
            }
            Ok(0)
        }
    }
}

fn report(f: &Failure) {
    let msg = f.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("tvparx: error={} exit={} message=\"{}\"", f.kind, f.code, msg);
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first =
                e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            report(&Failure::usage(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}
