use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::model::{ModelSpec, ParamId, ParamVector};

/// Lower floor for `κ_α` in the optimizer's coordinates.
pub const KAPPA_FLOOR: f64 = 1e-8;

/// Map from one constrained parameter to the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `(0, 1)` via the logistic function.
    Logistic,
    /// `(−1, 1)` via tanh.
    Tanh,
    /// `(0, ∞)` via exp.
    Exp,
}

impl Transform {
    pub fn for_param(id: ParamId) -> Self {
        match id {
            ParamId::Beta => Transform::Logistic,
            ParamId::PhiAlpha | ParamId::PhiGamma(_) => Transform::Tanh,
            ParamId::KappaAlpha => Transform::Exp,
            _ => Transform::Identity,
        }
    }

    pub fn forward(self, v: f64) -> Option<f64> {
        match self {
            Transform::Identity => Some(v),
            Transform::Logistic if v > 0.0 && v < 1.0 => Some((v / (1.0 - v)).ln()),
            Transform::Tanh if v > -1.0 && v < 1.0 => Some(v.atanh()),
            Transform::Exp if v > 0.0 => Some(v.ln()),
            _ => None,
        }
    }

    pub fn inverse(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Logistic => 1.0 / (1.0 + (-u).exp()),
            Transform::Tanh => u.tanh(),
            Transform::Exp => u.max(KAPPA_FLOOR.ln()).exp(),
        }
    }

    /// `dθ/du` at `u`.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Logistic => {
                let p = self.inverse(u);
                p * (1.0 - p)
            }
            Transform::Tanh => 1.0 - u.tanh().powi(2),
            Transform::Exp => {
                if u < KAPPA_FLOOR.ln() {
                    0.0
                } else {
                    u.exp()
                }
            }
        }
    }
}

/// Per-parameter transforms for the free parameters of a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct TransformMap {
    ids: Vec<ParamId>,
    tags: Vec<Transform>,
    template: ParamVector,
}

impl TransformMap {
    pub fn new(spec: &ModelSpec) -> Self {
        let ids = spec.free_params();
        let tags = ids.iter().map(|&id| Transform::for_param(id)).collect();
        let template = ParamVector {
            psi: vec![0.0; spec.n_deterministics],
            gamma: vec![Default::default(); spec.n_covariates],
            ..Default::default()
        };
        Self { ids, tags, template }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn tags(&self) -> &[Transform] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.ids.iter().map(ParamId::name).collect()
    }

    /// Free parameters in constrained coordinates.
    pub fn constrained(&self, theta: &ParamVector) -> Vec<f64> {
        self.ids.iter().map(|&id| theta.get(id)).collect()
    }

    /// Rebuild θ from constrained free values; frozen entries stay zero.
    pub fn from_constrained(&self, values: &[f64]) -> ParamVector {
        let mut th = self.template.clone();
        for (&id, &v) in self.ids.iter().zip(values) {
            th.set(id, v);
        }
        th
    }

    pub fn to_unconstrained(&self, theta: &ParamVector) -> Result<Vec<f64>, EstimationError> {
        if theta.n_covariates() != self.template.n_covariates()
            || theta.n_deterministics() != self.template.n_deterministics()
        {
            return Err(EstimationError::Domain("parameter dimensions do not match the model specification".into()));
        }
        self.ids
            .iter()
            .zip(&self.tags)
            .map(|(&id, t)| {
                let v = theta.get(id);
                t.forward(v).ok_or_else(|| {
                    EstimationError::Domain(format!("{} = {v} is outside its admissible range", id.name()))
                })
            })
            .collect()
    }

    pub fn from_unconstrained(&self, u: &[f64]) -> ParamVector {
        let mut th = self.template.clone();
        for ((&id, t), &ui) in self.ids.iter().zip(&self.tags).zip(u) {
            th.set(id, t.inverse(ui));
        }
        th
    }

    /// Diagonal Jacobian `dθ/du`.
    pub fn jacobian_diag(&self, u: &[f64]) -> Vec<f64> {
        self.tags.iter().zip(u).map(|(t, &ui)| t.derivative(ui)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GammaBlock;
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        assert_eq!(Transform::Logistic.forward(0.5), Some(0.0));
        assert_eq!(Transform::Logistic.inverse(0.0), 0.5);
        assert_eq!(Transform::Tanh.forward(0.0), Some(0.0));
        assert_eq!(Transform::Exp.forward(1.0), Some(0.0));
        assert_eq!(Transform::Exp.inverse(0.0), 1.0);
    }

    #[test]
    fn rejects_boundary_values() {
        let map = TransformMap::new(&ModelSpec::tv_par());
        for bad in [
            ParamVector::tv_par(0.0, 1.0, 0.0, 0.0, 0.1),
            ParamVector::tv_par(0.0, 0.5, 0.0, -1.0, 0.1),
            ParamVector::tv_par(0.0, 0.5, 0.0, 0.0, 0.0),
        ] {
            assert!(matches!(map.to_unconstrained(&bad), Err(EstimationError::Domain(_))));
        }
    }

    #[test]
    fn kappa_floor() {
        assert!((Transform::Exp.inverse(-1e3) / KAPPA_FLOOR - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        for t in [Transform::Identity, Transform::Logistic, Transform::Tanh, Transform::Exp] {
            let u = 0.37;
            let h = 1e-6;
            let fd = (t.inverse(u + h) - t.inverse(u - h)) / (2.0 * h);
            assert!((fd - t.derivative(u)).abs() < 1e-8, "{t:?}");
        }
    }

    proptest! {
        #[test]
        fn round_trip_on_interior(
            omega in -3.0..3.0f64, beta in 0.01..0.99f64, psi in -2.0..2.0f64,
            da in -1.0..1.0f64, pa in -0.99..0.99f64, ka in 1e-3..3.0f64,
            dg in -1.0..1.0f64, pg in -0.99..0.99f64, kg in -2.0..2.0f64,
        ) {
            let spec = ModelSpec::tv_parx(1, 1);
            let map = TransformMap::new(&spec);
            let th = ParamVector {
                omega, beta, psi: vec![psi], delta_alpha: da, phi_alpha: pa, kappa_alpha: ka,
                gamma: vec![GammaBlock { delta: dg, phi: pg, kappa: kg }],
            };
            let u = map.to_unconstrained(&th).unwrap();
            let back = map.from_unconstrained(&u);
            for id in map.ids() {
                prop_assert!((back.get(*id) - th.get(*id)).abs() <= 1e-12, "{}", id.name());
            }
        }
    }
}
