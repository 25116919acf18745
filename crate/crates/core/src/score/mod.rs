//! Conditional score functions `s(x, t | y)`.
//!
//! Analytic models (isotropic Gaussians and Gaussian mixtures per condition)
//! give exact scores of the noised marginals. [`ToyScoreNet`] is a small
//! trained network standing in for a real text-conditioned model, and
//! [`Guided`] applies classifier-free guidance on top of any model that has an
//! unconditional branch.

mod analytic;
mod checkpoint;
mod gaussian;
mod gmm;
mod guidance;
mod toynet;

pub use analytic::{AnalyticModel, ConditionSpec};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gaussian::{gaussian_score, GaussianConditionSpec};
pub use gmm::{gmm_score, GmmComponent, GmmConditionSpec};
pub use guidance::{cfg_score, Guided};
pub use toynet::{train_toy, LabeledSample, ToyScoreNet, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::TimePoint;

/// Reserved id of the null (unconditional) prompt.
pub const NULL_CONDITION: u32 = 0;

/// A prompt in a model's vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionId {
    pub id: u32,
    pub display: String,
}

impl ConditionId {
    pub fn new(id: u32, display: impl Into<String>) -> Self {
        Self {
            id,
            display: display.into(),
        }
    }

    pub fn null() -> Self {
        Self::new(NULL_CONDITION, "<null>")
    }

    pub fn is_null(&self) -> bool {
        self.id == NULL_CONDITION
    }
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.display)
    }
}

/// Ordered set of prompts. Id 0 is reserved for the null condition and never
/// appears here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    entries: Vec<ConditionId>,
}

impl Vocabulary {
    pub fn new(entries: Vec<ConditionId>) -> Result<Self> {
        let mut seen_ids = std::collections::HashSet::new();
        let mut seen_names = std::collections::HashSet::new();
        for c in &entries {
            if c.is_null() {
                return Err(Error::invalid("condition id 0 is reserved for the null prompt"));
            }
            if c.display.trim().is_empty() {
                return Err(Error::invalid(format!("condition {} has an empty label", c.id)));
            }
            if !seen_ids.insert(c.id) {
                return Err(Error::invalid(format!("duplicate condition id {}", c.id)));
            }
            if !seen_names.insert(c.display.as_str()) {
                return Err(Error::invalid(format!("duplicate condition label {:?}", c.display)));
            }
        }
        Ok(Self { entries })
    }

    /// Labels get ids `1..=n` in order.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        Self::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| ConditionId::new(i as u32 + 1, l.as_ref()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConditionId> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[ConditionId] {
        &self.entries
    }

    pub fn by_label(&self, label: &str) -> Result<&ConditionId> {
        self.entries
            .iter()
            .find(|c| c.display == label)
            .ok_or_else(|| Error::invalid(format!("unknown prompt {label:?}")))
    }

    pub fn position(&self, c: &ConditionId) -> Option<usize> {
        self.entries.iter().position(|e| e.id == c.id)
    }

    pub fn contains(&self, c: &ConditionId) -> bool {
        c.is_null() || self.position(c).is_some()
    }
}

/// A conditional score model `s(x, t | y)`.
///
/// Implementations are immutable at inference and may be shared across
/// threads.
pub trait ScoreModel: Send + Sync {
    /// Data dimension `d`.
    fn dim(&self) -> usize;

    fn vocabulary(&self) -> &Vocabulary;

    fn name(&self) -> String;

    /// Classifier-free guidance scale applied inside the model; 1 means none.
    fn guidance(&self) -> f64 {
        1.0
    }

    /// Score of the noised conditional marginal at `at`. The null condition is
    /// routed to [`ScoreModel::unconditional_score`].
    fn score(&self, x: &[f64], at: &TimePoint, y: &ConditionId) -> Result<Vec<f64>>;

    fn unconditional_score(&self, _x: &[f64], _at: &TimePoint) -> Result<Vec<f64>> {
        Err(Error::Unsupported(format!(
            "{} has no unconditional branch",
            self.name()
        )))
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn guidance(&self) -> f64 {
        (**self).guidance()
    }
    fn score(&self, x: &[f64], at: &TimePoint, y: &ConditionId) -> Result<Vec<f64>> {
        (**self).score(x, at, y)
    }
    fn unconditional_score(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        (**self).unconditional_score(x, at)
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn guidance(&self) -> f64 {
        (**self).guidance()
    }
    fn score(&self, x: &[f64], at: &TimePoint, y: &ConditionId) -> Result<Vec<f64>> {
        (**self).score(x, at, y)
    }
    fn unconditional_score(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        (**self).unconditional_score(x, at)
    }
}

pub(crate) fn check_dim(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::invalid(format!(
            "expected a {dim}-dimensional point, got {}",
            x.len()
        )));
    }
    Ok(())
}
