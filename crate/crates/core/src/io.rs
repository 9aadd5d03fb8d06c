//! CSV ingestion and JSON/CSV serialization of fits, filtered paths and
//! simulated series.
//!
//! Input CSV: a header row; a required `y` column of nonnegative integers;
//! any number of covariate columns `x:<name>` and deterministic columns
//! `d:<name>`, each read as finite reals in header order; an optional `date`
//! column kept as a label. Other columns are ignored and reported.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{InvertibilityReport, StationarityReport};
use crate::estimation::{ConvergenceReport, FitResult};
use crate::model::{FilterInit, FilterPath, ModelError, ModelSpec, ParamVector, RowMatrix, SeriesData};

pub const COVARIATE_PREFIX: &str = "x:";
pub const DETERMINISTIC_PREFIX: &str = "d:";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("negative count at row {row}: {value}")]
    NegativeCount { row: usize, value: String },
    #[error("non-finite value at row {row}, column {column}: {value}")]
    NonFiniteCovariate { row: usize, column: String, value: String },
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Explicit column selection. Names may be given with or without their
/// `x:`/`d:` prefix; when set, only the listed columns are used for that
/// role.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub covariates: Option<Vec<String>>,
    pub deterministics: Option<Vec<String>>,
}

/// A loaded series together with its column names (prefixes stripped).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: SeriesData,
    pub covariate_names: Vec<String>,
    pub deterministic_names: Vec<String>,
    pub ignored_columns: Vec<String>,
}

impl Dataset {
    /// Wrap a series, naming its columns `x1.., d1..`.
    pub fn unnamed(data: SeriesData) -> Self {
        Self {
            covariate_names: (1..=data.n_covariates()).map(|j| format!("x{j}")).collect(),
            deterministic_names: (1..=data.n_deterministics()).map(|j| format!("d{j}")).collect(),
            data,
            ignored_columns: Vec::new(),
        }
    }
}

fn strip(name: &str) -> &str {
    name.strip_prefix(COVARIATE_PREFIX).or_else(|| name.strip_prefix(DETERMINISTIC_PREFIX)).unwrap_or(name)
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Y,
    Date,
    X,
    D,
    Ignored,
}

fn assign_roles(header: &[String], opts: &LoadOptions, require_y: bool) -> Result<Vec<Role>, IoError> {
    let wants =
        |list: &Option<Vec<String>>, col: &str| list.as_ref().map(|l| l.iter().any(|n| n == col || n == strip(col)));
    let roles: Vec<Role> = header
        .iter()
        .map(|h| match h.as_str() {
            "y" => Role::Y,
            "date" => Role::Date,
            _ => {
                if let Some(sel) = wants(&opts.covariates, h) {
                    if sel {
                        return Role::X;
                    }
                } else if h.starts_with(COVARIATE_PREFIX) {
                    return Role::X;
                }
                if let Some(sel) = wants(&opts.deterministics, h) {
                    if sel {
                        return Role::D;
                    }
                } else if h.starts_with(DETERMINISTIC_PREFIX) {
                    return Role::D;
                }
                Role::Ignored
            }
        })
        .collect();
    if require_y && !roles.contains(&Role::Y) {
        return Err(IoError::MissingColumn("y".into()));
    }
    for list in [&opts.covariates, &opts.deterministics].into_iter().flatten() {
        for n in list {
            if !header.iter().any(|h| h == n || strip(h) == n) {
                return Err(IoError::MissingColumn(n.clone()));
            }
        }
    }
    Ok(roles)
}

fn csv_error(e: csv::Error) -> IoError {
    let row = e.position().map_or(0, |p| p.line().saturating_sub(1) as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IoError::Io(io),
        kind => IoError::Parse { row, column: String::new(), message: format!("{kind:?}") },
    }
}

/// Parse CSV text from any reader. Rows are numbered from 1 after the header.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &LoadOptions) -> Result<Dataset, IoError> {
    read_impl(reader, opts, true)
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset, IoError> {
    read_csv(std::fs::File::open(path)?, opts)
}

/// Like [`load_csv`] but `y` may be absent (covariate files for simulation);
/// a missing `y` reads as zeros.
pub fn load_regressors(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset, IoError> {
    read_impl(std::fs::File::open(path)?, opts, false)
}

fn read_impl<R: std::io::Read>(reader: R, opts: &LoadOptions, require_y: bool) -> Result<Dataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let roles = assign_roles(&header, opts, require_y)?;
    let has_y = roles.contains(&Role::Y);
    let mut n_rows = 0;

    let mut y = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut ds: Vec<f64> = Vec::new();
    let mut dates = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = i + 1;
        n_rows = row;
        for ((field, role), col) in rec.iter().zip(&roles).zip(&header) {
            match role {
                Role::Y => y.push(parse_count(field, row)?),
                Role::Date => dates.push(field.to_string()),
                Role::X => xs.push(parse_real(field, row, col)?),
                Role::D => ds.push(parse_real(field, row, col)?),
                Role::Ignored => {}
            }
        }
    }
    let names_for = |r: Role| -> Vec<String> {
        header.iter().zip(&roles).filter(|(_, &x)| x == r).map(|(h, _)| strip(h).to_string()).collect()
    };
    let covariate_names = names_for(Role::X);
    let deterministic_names = names_for(Role::D);
    if !has_y {
        y = vec![0; n_rows];
    }
    let n = y.len();
    let x = RowMatrix::from_row_major(n, covariate_names.len(), xs)?;
    let dmat = RowMatrix::from_row_major(n, deterministic_names.len(), ds)?;
    let mut data = SeriesData::new(y, x, dmat)?;
    if roles.contains(&Role::Date) {
        data.labels = Some(dates);
    }
    Ok(Dataset {
        data,
        covariate_names,
        deterministic_names,
        ignored_columns: header
            .iter()
            .zip(&roles)
            .filter(|(_, &r)| r == Role::Ignored)
            .map(|(h, _)| h.clone())
            .collect(),
    })
}

fn parse_count(field: &str, row: usize) -> Result<u64, IoError> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    match field.parse::<i128>() {
        Ok(v) if v < 0 => Err(IoError::NegativeCount { row, value: field.into() }),
        _ => Err(IoError::Parse {
            row,
            column: "y".into(),
            message: format!("expected a nonnegative integer, got {field:?}"),
        }),
    }
}

fn parse_real(field: &str, row: usize, column: &str) -> Result<f64, IoError> {
    let v: f64 = field.parse().map_err(|_| IoError::Parse {
        row,
        column: column.into(),
        message: format!("expected a real number, got {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(IoError::NonFiniteCovariate { row, column: column.into(), value: field.into() });
    }
    Ok(v)
}

fn header_line(ds: &Dataset, lead: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = Vec::new();
    if ds.data.labels.is_some() {
        h.push("date".into());
    }
    h.extend(lead.iter().map(|s| s.to_string()));
    h.extend(ds.covariate_names.iter().map(|n| format!("{COVARIATE_PREFIX}{n}")));
    h.extend(ds.deterministic_names.iter().map(|n| format!("{DETERMINISTIC_PREFIX}{n}")));
    h
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, IoError> {
    let bytes = w.into_inner().map_err(|e| IoError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_err(e: csv::Error) -> IoError {
    csv_error(e)
}

/// Series in the input schema, optionally with a trailing `lambda` column.
pub fn series_csv(ds: &Dataset, latent: Option<&[f64]>) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut h = header_line(ds, &["y"]);
    if latent.is_some() {
        h.push("lambda".into());
    }
    w.write_record(&h).map_err(write_err)?;
    let d = &ds.data;
    for t in 0..d.len() {
        let mut rec: Vec<String> = Vec::with_capacity(h.len());
        if let Some(l) = &d.labels {
            rec.push(l[t].clone());
        }
        rec.push(d.y[t].to_string());
        rec.extend(d.x.row(t).iter().map(f64::to_string));
        rec.extend(d.dmat.row(t).iter().map(f64::to_string));
        if let Some(l) = latent {
            rec.push(l[t].to_string());
        }
        w.write_record(&rec).map_err(write_err)?;
    }
    finish(w)
}

/// Filtered path, one row per period:
/// `t,[date,]y,lambda,log_lambda,alpha,gamma:<name>..,innov,loglik_term`.
pub fn path_csv(ds: &Dataset, path: &FilterPath) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut h: Vec<String> = vec!["t".into()];
    if ds.data.labels.is_some() {
        h.push("date".into());
    }
    h.extend(["y", "lambda", "log_lambda", "alpha"].map(String::from));
    h.extend(ds.covariate_names.iter().map(|n| format!("gamma:{n}")));
    h.extend(["innov", "loglik_term"].map(String::from));
    w.write_record(&h).map_err(write_err)?;
    for t in 0..path.len() {
        let mut rec: Vec<String> = vec![(t + 1).to_string()];
        if let Some(l) = &ds.data.labels {
            rec.push(l[t].clone());
        }
        rec.push(ds.data.y[t].to_string());
        for v in [path.lambda[t], path.log_lambda[t], path.alpha[t]] {
            rec.push(v.to_string());
        }
        rec.extend(path.gamma.row(t).iter().map(f64::to_string));
        rec.push(path.innov[t].to_string());
        rec.push(path.loglik_terms[t].to_string());
        w.write_record(&rec).map_err(write_err)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Default for Software {
    fn default() -> Self {
        Self { name: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

/// Standard errors aligned with `param_names`; `null` where a variance is
/// negative or undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StdErrorsJson {
    pub hessian: Option<Vec<Option<f64>>>,
    pub sandwich: Option<Vec<Option<f64>>>,
    /// Eigenvalues of the information matrix when it is numerically singular.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DiagnosticsJson {
    pub stationarity: Option<StationarityReport>,
    pub invertibility: Option<InvertibilityReport>,
}

/// Machine-readable summary of one fit. Field order is the serialization
/// order; floats use the shortest representation that round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub software: Software,
    pub seed: u64,
    pub model: ModelSpec,
    pub covariate_names: Vec<String>,
    pub deterministic_names: Vec<String>,
    pub n_obs: usize,
    pub n_params: usize,
    pub param_names: Vec<String>,
    pub theta_hat: ParamVector,
    pub std_errors: StdErrorsJson,
    pub loglik: f64,
    pub aic: f64,
    pub hqc: f64,
    pub bic: f64,
    pub rmse_in_sample: f64,
    pub init: FilterInit,
    pub diagnostics: DiagnosticsJson,
    pub convergence: ConvergenceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<FilterPath>,
}

fn finite_or_none(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

impl FitReport {
    pub fn new(fit: &FitResult, ds: &Dataset, seed: u64, include_paths: bool) -> Self {
        let cov = fit.covariance.as_ref();
        Self {
            software: Software::default(),
            seed,
            model: fit.spec.clone(),
            covariate_names: ds.covariate_names.clone(),
            deterministic_names: ds.deterministic_names.clone(),
            n_obs: fit.n_obs,
            n_params: fit.n_params,
            param_names: fit.param_names.clone(),
            theta_hat: fit.theta_hat.clone(),
            std_errors: StdErrorsJson {
                hessian: cov.and_then(|c| c.std_errors_hessian.as_deref()).map(finite_or_none),
                sandwich: cov.and_then(|c| c.std_errors_sandwich.as_deref()).map(finite_or_none),
                singular_eigenvalues: cov.and_then(|c| c.singular_eigenvalues.clone()),
            },
            loglik: fit.loglik,
            aic: fit.criteria.aic,
            hqc: fit.criteria.hqc,
            bic: fit.criteria.bic,
            rmse_in_sample: fit.rmse_in_sample(&ds.data),
            init: fit.init.clone(),
            diagnostics: DiagnosticsJson {
                stationarity: fit.stationarity.clone(),
                invertibility: fit.invertibility.clone(),
            },
            convergence: fit.convergence.clone(),
            paths: include_paths.then(|| fit.path.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Read parameters from JSON: either a bare parameter object or any object
/// with a `theta_hat` member (such as a [`FitReport`]). An `init` member next
/// to the parameters is returned as well.
pub fn read_params(json: &str) -> Result<(ParamVector, Option<FilterInit>), IoError> {
    let v: serde_json::Value = serde_json::from_str(json)?;
    let theta_v = v.get("theta_hat").cloned().unwrap_or_else(|| v.clone());
    let theta: ParamVector = serde_json::from_value(theta_v)?;
    let init = match v.get("init") {
        Some(i) if !i.is_null() => Some(serde_json::from_value(i.clone())?),
        _ => None,
    };
    Ok((theta, init))
}

/// One line per parameter: name, estimate, and both standard errors.
pub fn format_fit_summary(r: &FitReport) -> String {
    let mut s = String::new();
    let se = |v: &Option<Vec<Option<f64>>>, i: usize| match v.as_ref().and_then(|v| v[i]) {
        Some(x) => format!("{x:>12.6}"),
        None => format!("{:>12}", "-"),
    };
    let _ = writeln!(s, "{:<16} {:>12} {:>12} {:>12}", "param", "estimate", "se_hessian", "se_sandwich");
    let ids = r.model.free_params();
    for (i, (id, name)) in ids.iter().zip(&r.param_names).enumerate() {
        let _ = writeln!(
            s,
            "{:<16} {:>12.6} {} {}",
            name,
            r.theta_hat.get(*id),
            se(&r.std_errors.hessian, i),
            se(&r.std_errors.sandwich, i)
        );
    }
    let _ = writeln!(
        s,
        "loglik {:.4}  aic {:.4}  hqc {:.4}  bic {:.4}  rmse {:.4}  converged {}",
        r.loglik, r.aic, r.hqc, r.bic, r.rmse_in_sample, r.convergence.converged
    );
    s
}
