use super::{ConditionId, ScoreModel, Vocabulary};
use crate::error::Result;
use crate::sde::TimePoint;

/// Classifier-free guidance: `s_u + w (s_c - s_u)`.
pub fn cfg_score<M: ScoreModel + ?Sized>(
    x: &[f64],
    at: &TimePoint,
    y: &ConditionId,
    guidance_scale: f64,
    model: &M,
) -> Result<Vec<f64>> {
    let uncond = model.unconditional_score(x, at)?;
    if y.is_null() {
        return Ok(uncond);
    }
    let cond = model.score(x, at, y)?;
    Ok(uncond
        .iter()
        .zip(&cond)
        .map(|(u, c)| u + guidance_scale * (c - u))
        .collect())
}

/// A model whose conditional scores are replaced by their guided version.
#[derive(Debug, Clone)]
pub struct Guided<M> {
    inner: M,
    scale: f64,
}

impl<M: ScoreModel> Guided<M> {
    pub fn new(inner: M, scale: f64) -> Self {
        Self { inner, scale }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ScoreModel> ScoreModel for Guided<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn vocabulary(&self) -> &Vocabulary {
        self.inner.vocabulary()
    }

    fn name(&self) -> String {
        format!("{}+cfg({})", self.inner.name(), self.scale)
    }

    fn guidance(&self) -> f64 {
        self.scale
    }

    fn score(&self, x: &[f64], at: &TimePoint, y: &ConditionId) -> Result<Vec<f64>> {
        cfg_score(x, at, y, self.scale, &self.inner)
    }

    fn unconditional_score(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        self.inner.unconditional_score(x, at)
    }
}
