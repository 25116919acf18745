use serde::{Deserialize, Serialize};

use super::check_dim;
use crate::error::{Error, Result};
use crate::sde::{DiffusionSchedule, TimePoint};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub scale: f64,
}

/// Mixture of isotropic Gaussians for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConditionSpec {
    pub components: Vec<GmmComponent>,
}

impl GmmConditionSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let spec = Self { components };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal-weight mixture of the given `(mean, scale)` pairs.
    pub fn uniform(parts: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let w = 1.0 / parts.len().max(1) as f64;
        Self::new(
            parts
                .into_iter()
                .map(|(mean, scale)| GmmComponent { weight: w, mean, scale })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .components
            .first()
            .ok_or_else(|| Error::invalid("mixture has no components"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("mixture component mean is empty"));
        }
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::invalid(format!("component {i} has weight {}", c.weight)));
            }
            if !(c.scale.is_finite() && c.scale > 0.0) {
                return Err(Error::invalid(format!("component {i} has scale {}", c.scale)));
            }
            if c.mean.len() != dim {
                return Err(Error::invalid(format!("component {i} has dimension {}", c.mean.len())));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("component {i} mean is not finite")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Per-component `log w_k + log N(x; alpha mu_k, v_k I)` and `v_k`.
    fn component_terms(&self, x: &[f64], at: &TimePoint) -> Vec<(f64, f64)> {
        let d = x.len() as f64;
        self.components
            .iter()
            .map(|c| {
                let v = at.variance(c.scale);
                let sq: f64 = x
                    .iter()
                    .zip(&c.mean)
                    .map(|(xi, mi)| {
                        let r = xi - at.alpha * mi;
                        r * r
                    })
                    .sum();
                let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI * v).ln();
                (c.weight.ln() + log_norm - 0.5 * sq / v, v)
            })
            .collect()
    }

    pub fn log_density_at(&self, x: &[f64], at: &TimePoint) -> Result<f64> {
        check_dim(x, self.dim())?;
        let terms = self.component_terms(x, at);
        let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t.0 - max).exp()).sum();
        Ok(max + sum.ln())
    }

    /// Responsibility-weighted component scores, stabilized by log-sum-exp.
    pub fn score_at(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let terms = self.component_terms(x, at);
        let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = terms.iter().map(|t| (t.0 - max).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        let mut out = vec![0.0; x.len()];
        for ((c, &(_, v)), u) in self.components.iter().zip(&terms).zip(&unnorm) {
            let r = u / z;
            for ((o, xi), mi) in out.iter_mut().zip(x).zip(&c.mean) {
                *o -= r * (xi - at.alpha * mi) / v;
            }
        }
        Ok(out)
    }
}

/// Exact score of the noised mixture at grid time `t`.
pub fn gmm_score(
    x: &[f64],
    t: f64,
    spec: &GmmConditionSpec,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    let at = schedule.at(schedule.step_of(t)?)?;
    spec.score_at(x, &at)
}
