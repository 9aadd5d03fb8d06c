//! Unconstrained minimization: BFGS on central-difference gradients with a
//! Nelder–Mead restart whenever the line search stalls.

use super::numdiff;

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub param_tol: f64,
    pub fd_step_rel: f64,
    /// How many times a stalled BFGS run may hand over to the simplex.
    pub max_fallbacks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-5,
            param_tol: 1e-10,
            fd_step_rel: numdiff::default_gradient_step(),
            max_fallbacks: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    /// Euclidean norm of the finite-difference gradient at `x`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub fallbacks: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn grad(&mut self, x: &[f64], rel: f64) -> Vec<f64> {
        let h = numdiff::steps(x, rel);
        numdiff::gradient(|z| self.call(z), x, &h)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` from `x0`. The returned point is never worse than `x0`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &MinimizeOptions) -> Minimum {
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut fx = obj.call(&x);
    let mut g = obj.grad(&x, opts.fd_step_rel);
    let mut iterations = 0;
    let mut fallbacks = 0;

    if n == 0 {
        return Minimum { x, fx, grad_norm: 0.0, iterations, evaluations: obj.evals, fallbacks, converged: true };
    }

    // Inverse-Hessian approximation, row-major.
    let identity = |scale: f64| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = scale;
        }
        h
    };
    let mut hinv = identity(1.0);
    let mut fresh = true;

    while iterations < opts.max_iter {
        if norm(&g) < opts.grad_tol {
            break;
        }
        iterations += 1;

        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 || !slope.is_finite() {
            // Not a descent direction: reset to steepest descent.
            hinv = identity(1.0);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        // Bound the very first step so an unscaled gradient cannot throw the
        // iterate into a region where the filter saturates.
        let mut step = if fresh { (1.0 / norm(&dir)).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = obj.call(&trial);
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            if fallbacks >= opts.max_fallbacks {
                break;
            }
            fallbacks += 1;
            let (xs, fs) = nelder_mead(|z| obj.call(z), &x, fx, 0.1, 200 * n.max(1), opts.param_tol);
            if fs < fx {
                x = xs;
                fx = fs;
            }
            g = obj.grad(&x, opts.fd_step_rel);
            hinv = identity(1.0);
            fresh = true;
            continue;
        };

        let g_new = obj.grad(&x_new, opts.fd_step_rel);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let small_step = s.iter().zip(&x).all(|(si, xi)| si.abs() <= opts.param_tol * (1.0 + xi.abs()));
        let df = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;

        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if fresh {
                hinv = identity(sy / dot(&yv, &yv));
                fresh = false;
            }
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }

        if small_step && df.abs() <= f64::EPSILON * (1.0 + fx.abs()) {
            if norm(&g) < opts.grad_tol || fallbacks >= opts.max_fallbacks {
                break;
            }
            fallbacks += 1;
            let (xs, fs) = nelder_mead(|z| obj.call(z), &x, fx, 0.1, 200 * n, opts.param_tol);
            if fs < fx {
                x = xs;
                fx = fs;
            }
            g = obj.grad(&x, opts.fd_step_rel);
            hinv = identity(1.0);
            fresh = true;
        }
    }

    let grad_norm = norm(&g);
    Minimum { x, fx, grad_norm, iterations, evaluations: obj.evals, fallbacks, converged: grad_norm < opts.grad_tol }
}

/// Nelder–Mead simplex search with dimension-adaptive coefficients.
/// Returns the best vertex; never worse than the starting point.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    f0: f64,
    scale: f64,
    max_evals: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    if n == 0 {
        return (x0.to_vec(), f0);
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    pts.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += scale * x0[i].abs().max(1.0);
        let fp = f(&p);
        pts.push((p, fp));
    }
    let mut evals = n;

    while evals < max_evals {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = pts[n].1 - pts[0].1;
        let size =
            pts[1..].iter().flat_map(|(p, _)| p.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        if spread.abs() <= 1e-14 * (1.0 + pts[0].1.abs()) && size <= tol.max(1e-12) {
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n].0).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < pts[0].1 {
            let xe = along(alpha * gamma);
            let fe = f(&xe);
            evals += 1;
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < pts[n].1 {
                let xc = along(alpha * rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < pts[n].1.min(fr) {
                pts[n] = (xc, fc);
            } else {
                let best = pts[0].0.clone();
                for (p, fp) in pts.iter_mut().skip(1) {
                    for (pj, bj) in p.iter_mut().zip(&best) {
                        *pj = bj + sigma * (*pj - bj);
                    }
                    *fp = f(p);
                }
                evals += n;
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = pts.swap_remove(0);
    if fx <= f0 {
        (x, fx)
    } else {
        (x0.to_vec(), f0)
    }
}
