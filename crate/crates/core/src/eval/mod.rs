//! Rank alignment of estimated distances with ground-truth similarity.
//!
//! Alignment is `100 * spearman(-distance, similarity)`: distances grow as
//! similarity falls, so they are negated before correlating. For synthetic
//! worlds the similarity is the negated ground-truth distance.

mod ablation;
mod dataset;
mod matrix;
mod plot;
mod stats;
mod world;

pub use ablation::{ablate, AblationReport, Sweep};
pub use dataset::{load_pairs_tsv, parse_pairs_tsv, rescale_scores, AnnotatedPair, AnnotatedPairDataset, MAX_SCORE};
pub use matrix::{pairwise_matrix, SimilarityMatrix};
pub use plot::{heatmap_svg, line_plot_svg};
pub use stats::{average_ranks, spearman};
pub use world::{gen_semantic_world, resolve_world, LabelTree, SemanticWorld, WorldConfig, DEFAULT8};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_from_trace, EstimatorConfig, Method, ScoreDifferenceTrace, TimestepPrior};
use crate::score::ScoreModel;
use crate::sde::DiffusionSchedule;

/// `100 * spearman(-distances, similarity)`.
pub fn alignment_score(distances: &[f64], similarity: &[f64]) -> Result<f64> {
    let neg: Vec<f64> = distances.iter().map(|d| -d).collect();
    Ok(100.0 * spearman(&neg, similarity)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldAlignment {
    pub score: f64,
    pub within_mean: f64,
    pub between_mean: f64,
    pub triplet_agreement: Option<f64>,
    pub matrix: SimilarityMatrix,
}

/// Pairwise matrix of `model` over the world's leaves, scored against the
/// ground truth.
pub fn evaluate_world<M: ScoreModel + ?Sized>(
    world: &SemanticWorld,
    model: &M,
    method: Method,
    schedule: &DiffusionSchedule,
    config: &EstimatorConfig,
) -> Result<WorldAlignment> {
    if model.vocabulary().entries().iter().map(|c| &c.display).ne(world.labels.iter()) {
        return Err(Error::invalid("model vocabulary does not match the world's leaves"));
    }
    let matrix = pairwise_matrix(model, model.vocabulary(), method, schedule, config)?;
    score_world_matrix(world, matrix)
}

/// Score an already computed matrix against `world`.
pub fn score_world_matrix(world: &SemanticWorld, matrix: SimilarityMatrix) -> Result<WorldAlignment> {
    if matrix.labels != world.labels {
        return Err(Error::invalid("matrix labels do not match the world's leaves"));
    }
    // Directional methods are scored on the symmetrized matrix.
    let upper: Vec<f64> = matrix.pairs().map(|(i, j)| 0.5 * (matrix.get(i, j) + matrix.get(j, i))).collect();
    let similarity: Vec<f64> = world.ground_truth_upper().iter().map(|d| -d).collect();
    let score = alignment_score(&upper, &similarity)?;
    let groups = world.top_level_groups();
    let (within_mean, between_mean) = matrix
        .within_between_means(&groups)
        .unwrap_or((f64::NAN, f64::NAN));
    Ok(WorldAlignment {
        score,
        within_mean,
        between_mean,
        triplet_agreement: world.triplet_agreement(&matrix.values),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAlignment {
    pub dataset: String,
    pub score: f64,
    pub prior: TimestepPrior,
    pub pairs: usize,
    /// Estimated distance per dataset row, in row order.
    pub distances: Vec<f64>,
}

/// Alignment of trace-derived distances with a dataset's annotations. Every
/// row needs a trace for its pair, in either order.
pub fn evaluate_traces(
    dataset: &AnnotatedPairDataset,
    traces: &[ScoreDifferenceTrace],
    prior: TimestepPrior,
) -> Result<DatasetAlignment> {
    let mut by_pair: HashMap<(&str, &str), &ScoreDifferenceTrace> = HashMap::new();
    for t in traces {
        let (a, b) = (t.pair.0.as_str(), t.pair.1.as_str());
        by_pair.insert((a, b), t);
        by_pair.entry((b, a)).or_insert(t);
    }
    let mut cache: HashMap<*const ScoreDifferenceTrace, f64> = HashMap::new();
    let mut distances = Vec::with_capacity(dataset.len());
    for row in &dataset.rows {
        let trace = by_pair
            .get(&(row.text_a.as_str(), row.text_b.as_str()))
            .ok_or_else(|| Error::Parse {
                line: row.line,
                detail: format!("no trace for pair ({:?}, {:?})", row.text_a, row.text_b),
            })?;
        let key = *trace as *const _;
        let d = match cache.get(&key) {
            Some(d) => *d,
            None => {
                let d = estimate_from_trace(trace, prior)?.value;
                cache.insert(key, d);
                d
            }
        };
        distances.push(d);
    }
    Ok(DatasetAlignment {
        dataset: dataset.name.clone(),
        score: alignment_score(&distances, &dataset.scores())?,
        prior,
        pairs: distances.len(),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{conjure_distance_with_trace, TraceIteration, TraceMeta};
    use crate::oracle::gaussian_conjure_closed_form;

    #[test]
    fn perfect_oracle_world_scores_100() {
        let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), 1).unwrap();
        let schedule = DiffusionSchedule::with_steps(10).unwrap();
        let n = world.len();
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i][j] = gaussian_conjure_closed_form(
                        &world.specs[i],
                        &world.specs[j],
                        &schedule,
                        TimestepPrior::UniformAll,
                    )
                    .unwrap();
                }
            }
        }
        let matrix = SimilarityMatrix {
            labels: world.labels.clone(),
            values,
            method: Method::Conjure,
            steps: 10,
            config: EstimatorConfig::default(),
        };
        let a = score_world_matrix(&world, matrix).unwrap();
        assert!((a.score - 100.0).abs() < 1e-9);
        assert_eq!(a.triplet_agreement, Some(1.0));
        assert!(a.within_mean < a.between_mean);
    }

    #[test]
    fn analytic_model_recovers_the_world() {
        let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), 2).unwrap();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let a = evaluate_world(&world, &world.model(), Method::Conjure, &s, &EstimatorConfig::default()).unwrap();
        assert!((a.score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn alignment_depends_only_on_ranks() {
        let d = [0.3, 2.0, 1.1, 5.0, 0.2];
        let sim = [4.0, 1.0, 3.0, 0.5, 4.5];
        let base = alignment_score(&d, &sim).unwrap();
        assert!((base - 100.0).abs() < 1e-12);
        let warped: Vec<f64> = d.iter().map(|v: &f64| v.ln() * 7.0 + 3.0).collect();
        assert_eq!(alignment_score(&warped, &sim).unwrap(), base);
    }

    fn trace_for(a: &str, b: &str, gap: f64) -> ScoreDifferenceTrace {
        ScoreDifferenceTrace {
            pair: (a.into(), b.into()),
            meta: TraceMeta::new("m", 2, 1.0, "s"),
            iterations: vec![TraceIteration { seed: 1, y1: vec![gap, gap], y2: vec![gap, gap] }],
        }
    }

    #[test]
    fn traces_match_pairs_in_either_order() {
        let ds = parse_pairs_tsv("a\tb\t4.5\nc\td\t1.0\nf\te\t3.0\n".as_bytes(), "toy").unwrap();
        let traces = vec![trace_for("a", "b", 0.1), trace_for("d", "c", 3.0), trace_for("e", "f", 1.0)];
        let out = evaluate_traces(&ds, &traces, TimestepPrior::UniformAll).unwrap();
        assert_eq!(out.distances, vec![0.2, 6.0, 2.0]);
        assert!((out.score - 100.0).abs() < 1e-12);
        match evaluate_traces(&ds, &traces[..2], TimestepPrior::UniformAll) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimator_traces_feed_the_dataset_path() {
        let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), 5).unwrap();
        let model = world.model();
        let vocab = world.vocabulary();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let e = vocab.entries();
        let mut traces = Vec::new();
        let mut tsv = String::new();
        for (i, j) in [(0, 1), (0, 4), (2, 3), (5, 6), (1, 7)] {
            traces.push(conjure_distance_with_trace(&model, &e[i], &e[j], 2, &s, TimestepPrior::UniformAll, 3).unwrap().1);
            tsv.push_str(&format!("{}\t{}\t{}\n", e[j].display, e[i].display, 5.0 - world.ground_truth[i][j]));
        }
        let ds = parse_pairs_tsv(tsv.as_bytes(), "world").unwrap();
        let out = evaluate_traces(&ds, &traces, TimestepPrior::UniformAll).unwrap();
        assert!((out.score - 100.0).abs() < 1e-9);
    }
}
