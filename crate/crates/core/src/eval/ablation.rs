use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate_world, spearman, SemanticWorld};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method, TimestepPrior};
use crate::score::ScoreModel;
use crate::sde::{DiffusionSchedule, ScheduleParams};

/// One estimator setting varied over a list of values; everything else stays
/// at the base settings, including the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", content = "values", rename_all = "lowercase")]
pub enum Sweep {
    Prior(Vec<TimestepPrior>),
    K(Vec<usize>),
    #[serde(rename = "T")]
    Steps(Vec<usize>),
}

impl Sweep {
    pub fn parameter(&self) -> &'static str {
        match self {
            Sweep::Prior(_) => "prior",
            Sweep::K(_) => "k",
            Sweep::Steps(_) => "T",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Prior(v) => v.len(),
            Sweep::K(v) => v.len(),
            Sweep::Steps(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Sweep::Prior(v) => v.iter().map(|p| p.to_string()).collect(),
            Sweep::K(v) => v.iter().map(|k| k.to_string()).collect(),
            Sweep::Steps(v) => v.iter().map(|t| t.to_string()).collect(),
        }
    }

    /// Parse comma-separated values for `parameter` (`prior`, `k` or `T`).
    pub fn parse(parameter: &str, values: &str) -> Result<Self> {
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let ints = || {
            items
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| Error::invalid(format!("bad integer {s:?}"))))
                .collect::<Result<Vec<_>>>()
        };
        match parameter {
            "prior" => Ok(Sweep::Prior(items.iter().map(|s| s.parse()).collect::<Result<_>>()?)),
            "k" => Ok(Sweep::K(ints()?)),
            "T" | "steps" => Ok(Sweep::Steps(ints()?)),
            other => Err(Error::invalid(format!("cannot sweep {other:?}; expected prior, k or T"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub parameter: String,
    pub values: Vec<String>,
    pub method: Method,
    pub base_steps: usize,
    pub base: EstimatorConfig,
    /// Alignment (Spearman x 100) per value.
    pub scores: Vec<f64>,
    /// Upper-triangle distances per value.
    pub distances: Vec<Vec<f64>>,
    /// Wall-clock seconds per value.
    pub runtimes_secs: Vec<f64>,
}

impl AblationReport {
    /// `max - min` of the scores.
    pub fn spread(&self) -> f64 {
        let max = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.scores.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn best(&self) -> usize {
        self.scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Smallest Spearman correlation between the distance rankings of any two
    /// settings.
    pub fn rank_stability(&self) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for i in 0..self.distances.len() {
            for j in i + 1..self.distances.len() {
                worst = worst.min(spearman(&self.distances[i], &self.distances[j])?);
            }
        }
        Ok(worst)
    }

    /// Equality with runtimes excluded.
    pub fn same_results(&self, other: &Self) -> bool {
        Self { runtimes_secs: Vec::new(), ..self.clone() } == Self { runtimes_secs: Vec::new(), ..other.clone() }
    }
}

/// Evaluate world alignment once per swept value.
pub fn ablate<M: ScoreModel + ?Sized>(
    world: &SemanticWorld,
    model: &M,
    method: Method,
    schedule: ScheduleParams,
    base: &EstimatorConfig,
    sweep: &Sweep,
) -> Result<AblationReport> {
    if sweep.len() < 2 {
        return Err(Error::invalid("an ablation needs at least two values"));
    }
    let settings: Vec<(ScheduleParams, EstimatorConfig)> = match sweep {
        Sweep::Prior(v) => v.iter().map(|&prior| (schedule, EstimatorConfig { prior, ..*base })).collect(),
        Sweep::K(v) => v.iter().map(|&k| (schedule, EstimatorConfig { k, ..*base })).collect(),
        Sweep::Steps(v) => v
            .iter()
            .map(|&steps| (ScheduleParams { steps, ..schedule }, *base))
            .collect(),
    };
    let mut report = AblationReport {
        parameter: sweep.parameter().to_string(),
        values: sweep.labels(),
        method,
        base_steps: schedule.steps,
        base: *base,
        scores: Vec::new(),
        distances: Vec::new(),
        runtimes_secs: Vec::new(),
    };
    for (params, cfg) in settings {
        let sched = DiffusionSchedule::from_params(params)?;
        let start = Instant::now();
        let a = evaluate_world(world, model, method, &sched, &cfg)?;
        report.runtimes_secs.push(start.elapsed().as_secs_f64());
        report.scores.push(a.score);
        report.distances.push(a.matrix.upper_triangle());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{gen_semantic_world, WorldConfig, DEFAULT8};

    #[test]
    fn sweep_parsing() {
        assert_eq!(Sweep::parse("k", "1,2, 3").unwrap(), Sweep::K(vec![1, 2, 3]));
        assert_eq!(Sweep::parse("T", "5,10").unwrap(), Sweep::Steps(vec![5, 10]));
        assert_eq!(
            Sweep::parse("prior", "uniform,cumulative:5,pointwise:10").unwrap(),
            Sweep::Prior(vec![TimestepPrior::UniformAll, TimestepPrior::Cumulative(5), TimestepPrior::Pointwise(10)])
        );
        assert!(Sweep::parse("lr", "1,2").is_err());
        assert!(Sweep::parse("k", "1,x").is_err());
    }

    #[test]
    fn sweeps_are_reproducible_and_complete() {
        let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), 0).unwrap();
        let model = world.model();
        let params = ScheduleParams { steps: 10, ..DiffusionSchedule::with_steps(10).unwrap().params() };
        let base = EstimatorConfig { k: 2, seed: 4, ..Default::default() };
        let sweep = Sweep::Steps(vec![5, 10, 20]);
        let a = ablate(&world, &model, Method::Conjure, params, &base, &sweep).unwrap();
        let b = ablate(&world, &model, Method::Conjure, params, &base, &sweep).unwrap();
        assert!(a.same_results(&b));
        assert_eq!(a.scores.len(), 3);
        assert_eq!(a.runtimes_secs.len(), 3);
        assert_eq!(a.distances[0].len(), 28);
        assert!(a.spread() < 1e-9);
        assert!((a.rank_stability().unwrap() - 1.0).abs() < 1e-12);
        assert!(ablate(&world, &model, Method::Conjure, params, &base, &Sweep::K(vec![3])).is_err());
        let json = serde_json::to_string(&sweep).unwrap();
        assert_eq!(json, r#"{"parameter":"T","values":[5,10,20]}"#);
    }

    #[test]
    fn best_prefers_the_first_maximum() {
        let r = AblationReport {
            parameter: "k".into(),
            values: vec!["1".into(), "2".into(), "3".into()],
            method: Method::Conjure,
            base_steps: 10,
            base: EstimatorConfig::default(),
            scores: vec![90.0, 95.0, 95.0],
            distances: vec![],
            runtimes_secs: vec![],
        };
        assert_eq!(r.best(), 1);
        assert_eq!(r.spread(), 5.0);
    }
}
