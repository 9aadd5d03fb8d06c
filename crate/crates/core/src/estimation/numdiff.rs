//! Central finite differences.

use nalgebra::DMatrix;

/// Machine epsilon to the 1/3: balances truncation and rounding for a
/// central first difference.
pub fn default_gradient_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// Machine epsilon to the 1/4: the matching balance for a central second
/// difference.
pub fn default_hessian_step() -> f64 {
    f64::EPSILON.powf(0.25)
}

/// Absolute step `rel · max(1, |x_i|)` for every coordinate.
pub fn steps(x: &[f64], rel: f64) -> Vec<f64> {
    x.iter().map(|v| rel * v.abs().max(1.0)).collect()
}

/// Central-difference gradient of a scalar function.
pub fn gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h[i];
            let fp = f(&xp);
            xp[i] = x[i] - h[i];
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h[i])
        })
        .collect()
}

/// Central-difference Jacobian of a vector-valued function, one column per
/// coordinate: `J[(t, i)] = ∂f_t/∂x_i`.
pub fn jacobian<F: FnMut(&[f64]) -> Vec<f64>>(mut f: F, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h[i])).collect::<Vec<_>>());
    }
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, x.len(), |t, i| cols[i][t])
}

/// Central-difference Hessian. Diagonal entries use the three-point second
/// difference, off-diagonals the four-point cross difference. The result is
/// symmetric by construction.
pub fn hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_smooth_function() {
        let f = |x: &[f64]| x[0].sin() * x[1].exp();
        let x = [0.7, -0.3];
        let g = gradient(f, &x, &steps(&x, default_gradient_step()));
        assert!((g[0] - 0.7f64.cos() * (-0.3f64).exp()).abs() < 1e-9);
        assert!((g[1] - 0.7f64.sin() * (-0.3f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn jacobian_columns() {
        let f = |x: &[f64]| vec![x[0] * x[1], x[0] + 3.0 * x[1], x[1].powi(2)];
        let x = [2.0, 5.0];
        let j = jacobian(f, &x, &steps(&x, 1e-5));
        let want = [[5.0, 2.0], [1.0, 3.0], [0.0, 10.0]];
        for t in 0..3 {
            for i in 0..2 {
                assert!((j[(t, i)] - want[t][i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hessian_of_non_quadratic() {
        // f = exp(x) y^3
        let f = |v: &[f64]| v[0].exp() * v[1].powi(3);
        let x = [0.2, 1.5];
        let h = hessian(f, &x, &steps(&x, default_hessian_step()));
        let e = 0.2f64.exp();
        let want = [[e * 3.375, e * 3.0 * 2.25], [e * 3.0 * 2.25, e * 6.0 * 1.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - want[i][j]).abs() < 1e-6 * want[i][j].abs());
            }
        }
    }
}
