//! Exact Poisson variates.
//!
//! Sequential inversion for small means and Hörmann's transformed rejection
//! with squeeze (PTRS) above [`INVERSION_CUTOFF`]. Neither uses a normal
//! approximation, so draws stay exact for the intensities the filter can
//! produce (up to `e^25`).

use rand::Rng;

/// Means below this use inversion.
pub const INVERSION_CUTOFF: f64 = 10.0;

/// A Poisson(λ) sampler with precomputed constants.
#[derive(Debug, Clone, Copy)]
pub struct PoissonSampler {
    lambda: f64,
    method: Method,
}

#[derive(Debug, Clone, Copy)]
enum Method {
    Zero,
    Inversion { p0: f64 },
    Ptrs(Ptrs),
}

#[derive(Debug, Clone, Copy)]
struct Ptrs {
    log_lambda: f64,
    a: f64,
    b: f64,
    inv_alpha: f64,
    v_r: f64,
}

impl PoissonSampler {
    /// `lambda` must be finite and nonnegative.
    pub fn new(lambda: f64) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "Poisson mean must be finite and nonnegative, got {lambda}");
        let method = if lambda == 0.0 {
            Method::Zero
        } else if lambda < INVERSION_CUTOFF {
            Method::Inversion { p0: (-lambda).exp() }
        } else {
            let slam = lambda.sqrt();
            let b = 0.931 + 2.53 * slam;
            Method::Ptrs(Ptrs {
                log_lambda: lambda.ln(),
                a: -0.059 + 0.02483 * b,
                b,
                inv_alpha: 1.1239 + 1.1328 / (b - 3.4),
                v_r: 0.9277 - 3.6224 / (b - 2.0),
            })
        };
        Self { lambda, method }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.method {
            Method::Zero => 0,
            Method::Inversion { p0 } => {
                let u: f64 = rng.gen();
                let mut k = 0u64;
                let mut p = p0;
                let mut cdf = p0;
                // The tail past k≈60 carries < 1e-30 mass for λ < 10.
                while u > cdf && k < 200 {
                    k += 1;
                    p *= self.lambda / k as f64;
                    cdf += p;
                }
                k
            }
            Method::Ptrs(c) => loop {
                let u: f64 = rng.gen::<f64>() - 0.5;
                let v: f64 = rng.gen();
                let us = 0.5 - u.abs();
                let k = ((2.0 * c.a / us + c.b) * u + self.lambda + 0.43).floor();
                if us >= 0.07 && v <= c.v_r {
                    return k as u64;
                }
                if k < 0.0 || (us < 0.013 && v > us) {
                    continue;
                }
                let lhs = v.ln() + c.inv_alpha.ln() - (c.a / (us * us) + c.b).ln();
                let rhs = -self.lambda + k * c.log_lambda - ln_factorial(k);
                if lhs <= rhs {
                    return k as u64;
                }
            },
        }
    }
}

/// Draw one Poisson(λ) variate.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    PoissonSampler::new(lambda).sample(rng)
}

/// `ln k!` for a nonnegative integer-valued `k`.
pub fn ln_factorial(k: f64) -> f64 {
    if k < 30.0 {
        let mut s = 0.0;
        let mut i = 2.0;
        while i <= k {
            s += f64::ln(i);
            i += 1.0;
        }
        s
    } else {
        // Stirling series; truncation error below 1/(1680 k^7).
        let inv = 1.0 / k;
        let inv2 = inv * inv;
        k * k.ln() - k
            + 0.5 * (2.0 * std::f64::consts::PI * k).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
    }
}
