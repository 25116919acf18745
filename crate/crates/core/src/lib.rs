//! Prompt-to-prompt semantic distances from the path divergence of
//! conditional reverse diffusions.
//!
//! Two prompts are compared by denoising shared noise under each of them and
//! accumulating the squared difference of their conditional scores along the
//! way. The crate bundles the sampler, analytic and trained score models, the
//! estimator with its baselines, independent oracles, and an evaluation
//! harness for rank alignment with ground-truth similarities.

pub mod error;
pub mod estimator;
pub mod eval;
pub mod oracle;
pub mod rng;
pub mod score;
pub mod sde;

pub use error::{Error, Result};
pub use estimator::{
    conjure_distance, d_final, d_initial, d_output, estimate_from_trace, kl_distance, DistanceEstimate,
    EstimatorConfig, Method, ScoreDifferenceTrace, TimestepPrior,
};
pub use score::{ConditionId, ScoreModel, Vocabulary};
pub use sde::DiffusionSchedule;
