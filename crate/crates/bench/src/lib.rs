//! Shared fixtures for the criterion benchmarks.

use tvparx_core::model::{FilterInit, RowMatrix};
use tvparx_core::{simulate, ModelSpec, ParamVector, SeriesData};

pub fn tv_par_theta() -> ParamVector {
    ParamVector::tv_par(0.1, 0.8, 0.05, 0.5, 0.1)
}

/// A TV-PAR sample of length `n`.
pub fn tv_par_series(n: usize, seed: u64) -> SeriesData {
    let th = tv_par_theta();
    let init = FilterInit::unconditional(&th);
    simulate(&th, n, RowMatrix::zeros(n, 0), RowMatrix::zeros(n, 0), &init, seed)
        .expect("stable parameters simulate")
        .data
}

/// A TV-PARX(2, 0) sample with smooth covariates, the shape of the defaults
/// application.
pub fn tv_parx_series(n: usize, seed: u64) -> (SeriesData, ParamVector, ModelSpec) {
    let mut th = tv_par_theta();
    th.gamma = vec![
        tvparx_core::GammaBlock { delta: 0.02, phi: 0.6, kappa: 0.01 },
        tvparx_core::GammaBlock { delta: -0.01, phi: 0.3, kappa: 0.0 },
    ];
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let s = t as f64 / 50.0;
            vec![s.sin(), (0.3 * s).cos()]
        })
        .collect();
    let x = RowMatrix::from_rows(&rows, 2).expect("rectangular");
    let init = FilterInit::unconditional(&th);
    let sim = simulate(&th, n, x, RowMatrix::zeros(n, 0), &init, seed).expect("stable parameters simulate");
    (sim.data, th, ModelSpec::tv_parx(2, 0))
}
