//! Monte-Carlo distances between two prompts of a conditional score model.
//!
//! The main estimator ([`conjure_distance`]) denoises a shared `x_T ~ N(0, I)`
//! once under each prompt and, at every pre-step state of both paths, sums the
//! squared gap `|s(x_t, t | y1) - s(x_t, t | y2)|^2` averaged over the
//! timesteps selected by a [`TimestepPrior`]. Both directions are added, so
//! the returned value is twice the symmetrized path KL (with unit diffusion
//! weighting); only ranks matter downstream.
//!
//! The two paths of one iteration share `x_T` and all Brownian increments.

mod baselines;
mod path;
mod trace;

pub use baselines::{d_final, d_initial, d_output};
pub use path::{conjure_distance, conjure_distance_with_trace, kl_distance};
pub use trace::{
    estimate_from_trace, read_trace, read_trace_file, write_trace, write_trace_file, Direction,
    ScoreDifferenceTrace, TraceIteration, TraceMeta, TraceRecord, TRACE_RECORD_SCHEMA,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{ConditionId, ScoreModel};

pub const DEFAULT_ITERATIONS: usize = 5;

/// Which grid steps contribute to the path estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TimestepPrior {
    /// Every step `1..=T`.
    #[default]
    UniformAll,
    /// Steps `T'..=T`.
    Cumulative(usize),
    /// Only step `T'`.
    Pointwise(usize),
}

impl TimestepPrior {
    /// Steps in the prior's support, ascending.
    pub fn support(&self, steps: usize) -> Result<Vec<usize>> {
        let check = |tp: usize| {
            if tp == 0 || tp > steps {
                Err(Error::invalid(format!("prior step {tp} outside 1..={steps}")))
            } else {
                Ok(tp)
            }
        };
        match *self {
            TimestepPrior::UniformAll => Ok((1..=steps).collect()),
            TimestepPrior::Cumulative(tp) => Ok((check(tp)?..=steps).collect()),
            TimestepPrior::Pointwise(tp) => Ok(vec![check(tp)?]),
        }
    }
}

impl fmt::Display for TimestepPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimestepPrior::UniformAll => f.write_str("uniform"),
            TimestepPrior::Cumulative(t) => write!(f, "cumulative:{t}"),
            TimestepPrior::Pointwise(t) => write!(f, "pointwise:{t}"),
        }
    }
}

impl FromStr for TimestepPrior {
    type Err = Error;

    /// Accepts `uniform`, `cumulative:<T'>` and `pointwise:<T'>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" || s == "uniform-all" {
            return Ok(TimestepPrior::UniformAll);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("unknown prior {s:?}")))?;
        let tp: usize = arg
            .parse()
            .map_err(|_| Error::invalid(format!("bad prior step {arg:?}")))?;
        match kind {
            "cumulative" => Ok(TimestepPrior::Cumulative(tp)),
            "pointwise" => Ok(TimestepPrior::Pointwise(tp)),
            _ => Err(Error::invalid(format!("unknown prior kind {kind:?}"))),
        }
    }
}

impl Serialize for TimestepPrior {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimestepPrior {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The five distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Conjure,
    Kl,
    Initial,
    Final,
    Output,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Conjure,
        Method::Kl,
        Method::Initial,
        Method::Final,
        Method::Output,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Conjure => "conjure",
            Method::Kl => "kl",
            Method::Initial => "initial",
            Method::Final => "final",
            Method::Output => "output",
        }
    }

    /// Whether the value is symmetric in the two prompts by construction.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Method::Kl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Monte-Carlo estimate of a distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub method: Method,
    pub pair: (String, String),
    pub value: f64,
    pub k: usize,
    /// Sample standard deviation over `sqrt(k)`; absent for `k < 2`.
    pub std_error: Option<f64>,
    pub per_iteration: Vec<f64>,
    /// Only for the path estimators.
    pub prior: Option<TimestepPrior>,
}

impl DistanceEstimate {
    pub(crate) fn from_iterations(
        method: Method,
        pair: (String, String),
        per_iteration: Vec<f64>,
        prior: Option<TimestepPrior>,
    ) -> Self {
        let k = per_iteration.len();
        let value = per_iteration.iter().sum::<f64>() / k as f64;
        let std_error = (k >= 2).then(|| {
            let var = per_iteration.iter().map(|v| (v - value) * (v - value)).sum::<f64>()
                / (k - 1) as f64;
            (var / k as f64).sqrt()
        });
        Self {
            method,
            pair,
            value,
            k,
            std_error,
            per_iteration,
            prior,
        }
    }
}

/// Settings shared by every estimator call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub k: usize,
    pub prior: TimestepPrior,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_ITERATIONS,
            prior: TimestepPrior::UniformAll,
            seed: 0,
        }
    }
}

pub(crate) fn check_request<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("need at least one Monte-Carlo iteration"));
    }
    for y in [y1, y2] {
        if y.is_null() || !model.vocabulary().contains(y) {
            return Err(Error::invalid(format!("prompt {y} is not in the model vocabulary")));
        }
    }
    Ok(())
}

pub(crate) fn squared_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Mean of `gaps` over `support` (1-based steps, gaps indexed by step - 1).
pub(crate) fn support_mean(gaps: &[f64], support: &[usize]) -> f64 {
    support.iter().map(|&s| gaps[s - 1]).sum::<f64>() / support.len() as f64
}

/// Run `estimate` for any of the five methods.
pub fn estimate<M: ScoreModel + ?Sized>(
    method: Method,
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    schedule: &crate::sde::DiffusionSchedule,
    config: &EstimatorConfig,
) -> Result<DistanceEstimate> {
    match method {
        Method::Conjure => conjure_distance(model, y1, y2, config.k, schedule, config.prior, config.seed),
        Method::Kl => kl_distance(model, y1, y2, config.k, schedule, config.prior, config.seed),
        Method::Initial => d_initial(model, y1, y2, config.k, schedule, config.seed),
        Method::Final => d_final(model, y1, y2, config.k, schedule, config.seed),
        Method::Output => d_output(model, y1, y2, config.k, schedule, config.seed),
    }
}
