use proptest::prelude::*;
use tvparx_core::diagnostics::ell_bound;
use tvparx_core::model::FilterInit;
use tvparx_core::{
    check_invertibility, check_stationarity, default_init, filter, simulate, ParamVector, RowMatrix, SeriesData,
};

fn stable_theta() -> ParamVector {
    ParamVector::tv_par(0.3, 0.5, 0.02, 0.2, 0.02)
}

fn sim(theta: &ParamVector, n: usize, seed: u64) -> SeriesData {
    let init = FilterInit::unconditional(theta);
    simulate(theta, n, RowMatrix::zeros(n, 0), RowMatrix::zeros(n, 0), &init, seed).unwrap().data
}

fn forgets(theta: &ParamVector, data: &SeriesData) -> bool {
    let a = default_init(data, theta);
    let b = FilterInit { lambda1: a.lambda1 * 1f64.exp(), alpha1: a.alpha1 + 0.5, gamma1: vec![] };
    let pa = filter(data, theta, &a).unwrap();
    let pb = filter(data, theta, &b).unwrap();
    pa.log_lambda[200..].iter().zip(&pb.log_lambda[200..]).all(|(x, y)| (x - y).abs() < 1e-8)
}

#[test]
fn zero_counts_match_closed_recursion() {
    let th = ParamVector::tv_par(0.0, 0.5, 0.05, 0.2, 0.1);
    let n = 50;
    let r = check_invertibility(&th, &SeriesData::counts(vec![0; n])).unwrap();
    assert!((r.ell + 0.375).abs() < 1e-15);
    // with y = 0 every z is −1
    let (mut a, mut z_prev, mut total) = (0.05 / 0.8, 0.0, 0.0);
    for _ in 0..n {
        a = 0.05 + 0.2 * a - 0.1 * z_prev;
        total += (0.5 * (0.0 - a + 0.375 * 0.5f64).exp()).ln();
        z_prev = -1.0;
    }
    assert!((r.empirical_log_contraction - total / n as f64).abs() < 1e-12);
}

#[test]
fn stable_draws_contract_and_agree_with_forgetting() {
    let th = stable_theta();
    let seeds = 100;
    let (mut contracting, mut agree) = (0, 0);
    for seed in 0..seeds {
        let data = sim(&th, 10_000, 2_000 + seed);
        let inv = check_invertibility(&th, &data).unwrap().satisfied_empirically;
        contracting += inv as usize;
        agree += (inv == forgets(&th, &data)) as usize;
    }
    assert!(contracting >= 95, "{contracting}/{seeds}");
    assert!(agree >= 90, "{agree}/{seeds}");
}

#[test]
fn boundary_estimates_are_flagged_not_rejected() {
    let r = check_stationarity(&ParamVector::tv_par(0.0, 0.99, 0.7, 0.0, 0.1)).unwrap();
    assert!((r.product - 0.99 * 1.69).abs() < 1e-12);
    assert!(!r.cond_product && !r.all_satisfied);
    assert!(check_stationarity(&ParamVector::tv_par(0.0, 0.5, 0.1, 1.0, 0.1)).is_err());
}

proptest! {
    #[test]
    fn ell_shifts_with_omega(
        omega in -2.0..2.0f64, beta in 0.01..0.99f64, delta in -1.0..1.0f64,
        phi in -0.99..0.99f64, kappa in 0.01..2.0f64, c in -3.0..3.0f64,
    ) {
        let a = ParamVector::tv_par(omega, beta, delta, phi, kappa);
        let b = ParamVector::tv_par(omega + c * (1.0 - beta), beta, delta, phi, kappa);
        let (la, lb) = (ell_bound(&a).unwrap(), ell_bound(&b).unwrap());
        prop_assert!((lb - la - c).abs() <= 1e-9 * (1.0 + la.abs()));
    }

    #[test]
    fn stationarity_flags_match_inequalities(
        beta in -1.5..1.5f64, delta in -1.0..1.0f64, phi in -1.5..1.5f64, gphi in -1.5..1.5f64,
    ) {
        prop_assume!(phi != 1.0);
        let mut th = ParamVector::tv_par(0.0, beta, delta, phi, 0.1);
        th.gamma = vec![tvparx_core::GammaBlock { delta: 0.0, phi: gphi, kappa: 0.0 }];
        th.psi = vec![];
        let r = check_stationarity(&th).unwrap();
        let ab = delta / (1.0 - phi);
        prop_assert_eq!(r.cond_phi, phi.abs() < 1.0);
        prop_assert_eq!(r.cond_beta, beta > 0.0 && beta < 1.0);
        prop_assert_eq!(r.cond_product, beta * (beta + ab).abs() < 1.0);
        prop_assert_eq!(r.gamma_conds.clone(), vec![gphi.abs() < 1.0]);
        prop_assert_eq!(r.all_satisfied, r.cond_phi && r.cond_beta && r.cond_product && gphi.abs() < 1.0);
    }
}
