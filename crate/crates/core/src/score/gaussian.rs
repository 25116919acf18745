use serde::{Deserialize, Serialize};

use super::check_dim;
use crate::error::{Error, Result};
use crate::sde::{DiffusionSchedule, TimePoint};

/// Isotropic Gaussian data distribution `N(mean, scale^2 I)` for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConditionSpec {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl GaussianConditionSpec {
    pub fn new(mean: Vec<f64>, scale: f64) -> Result<Self> {
        let spec = Self { mean, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() {
            return Err(Error::invalid("gaussian mean is empty"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid(format!("gaussian scale must be positive, got {}", self.scale)));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gaussian mean has non-finite components"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Score of `p_t = N(alpha m, (alpha^2 s^2 + sigma^2) I)`.
    pub fn score_at(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let v = at.variance(self.scale);
        Ok(x.iter()
            .zip(&self.mean)
            .map(|(xi, mi)| -(xi - at.alpha * mi) / v)
            .collect())
    }
}

/// Exact score of the noised Gaussian condition at grid time `t`.
pub fn gaussian_score(
    x: &[f64],
    t: f64,
    spec: &GaussianConditionSpec,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    let at = schedule.at(schedule.step_of(t)?)?;
    spec.score_at(x, &at)
}
