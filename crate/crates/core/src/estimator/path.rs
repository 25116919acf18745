use rayon::prelude::*;

use super::trace::{ScoreDifferenceTrace, TraceIteration, TraceMeta};
use super::{check_request, squared_gap, support_mean, DistanceEstimate, Method, TimestepPrior};
use crate::error::{Error, Result};
use crate::rng;
use crate::score::{ConditionId, ScoreModel};
use crate::sde::{integrate_reverse, DiffusionSchedule, EulerMaruyama, NoiseRecord};

/// Squared gaps along the path denoised under `follow`, indexed by step - 1.
fn path_gaps<M: ScoreModel + ?Sized>(
    model: &M,
    x_t: &[f64],
    noise: &NoiseRecord,
    follow: &ConditionId,
    other: &ConditionId,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    let mut gaps = vec![0.0; schedule.steps()];
    let same = follow.id == other.id;
    integrate_reverse(x_t, noise, schedule, &EulerMaruyama, |at, x| {
        let s_follow = model.score(x, at, follow)?;
        if !same {
            let s_other = model.score(x, at, other)?;
            if let Some(i) = s_other.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    step: at.step,
                    detail: format!("score component {i} under {other} is {}", s_other[i]),
                });
            }
            gaps[at.step - 1] = squared_gap(&s_follow, &s_other);
        }
        Ok(s_follow)
    })?;
    Ok(gaps)
}

/// Draw `x_T` and the shared increments for iteration `index`.
pub(crate) fn iteration_draws(master: u64, index: usize, steps: usize, dim: usize) -> (u64, Vec<f64>, NoiseRecord) {
    let seed = rng::derive_seed(master, index as u64);
    let mut r = rng::rng_from_seed(seed);
    let x_t = rng::standard_normal(&mut r, dim);
    let noise = NoiseRecord::draw(&mut r, steps, dim);
    (seed, x_t, noise)
}

fn run_iterations<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    seed: u64,
    both_directions: bool,
) -> Result<Vec<TraceIteration>> {
    (0..k)
        .into_par_iter()
        .map(|i| {
            let (iter_seed, x_t, noise) = iteration_draws(seed, i, schedule.steps(), model.dim());
            let y1_dir = path_gaps(model, &x_t, &noise, y1, y2, schedule)?;
            let y2_dir = if both_directions {
                path_gaps(model, &x_t, &noise, y2, y1, schedule)?
            } else {
                Vec::new()
            };
            Ok(TraceIteration {
                seed: iter_seed,
                y1: y1_dir,
                y2: y2_dir,
            })
        })
        .collect()
}

/// Per-iteration contributions from recorded gaps; shared with trace replay so
/// both produce bit-identical estimates.
pub(crate) fn reduce_iterations(iterations: &[TraceIteration], support: &[usize], both: bool) -> Vec<f64> {
    iterations
        .iter()
        .map(|it| {
            let a = support_mean(&it.y1, support);
            if both {
                a + support_mean(&it.y2, support)
            } else {
                a
            }
        })
        .collect()
}

fn pair_of(y1: &ConditionId, y2: &ConditionId) -> (String, String) {
    (y1.display.clone(), y2.display.clone())
}

/// Symmetrized path distance with its full gap trace.
pub fn conjure_distance_with_trace<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    prior: TimestepPrior,
    seed: u64,
) -> Result<(DistanceEstimate, ScoreDifferenceTrace)> {
    check_request(model, y1, y2, k)?;
    let support = prior.support(schedule.steps())?;
    let iterations = run_iterations(model, y1, y2, k, schedule, seed, true)?;
    let per_iteration = reduce_iterations(&iterations, &support, true);
    let estimate = DistanceEstimate::from_iterations(Method::Conjure, pair_of(y1, y2), per_iteration, Some(prior));
    let trace = ScoreDifferenceTrace {
        pair: pair_of(y1, y2),
        meta: TraceMeta::new(model.name(), schedule.steps(), model.guidance(), schedule.id()),
        iterations,
    };
    Ok((estimate, trace))
}

/// Symmetrized path distance: mean over `k` iterations of the prior-averaged
/// squared score gaps along both conditional paths.
pub fn conjure_distance<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    prior: TimestepPrior,
    seed: u64,
) -> Result<DistanceEstimate> {
    conjure_distance_with_trace(model, y1, y2, k, schedule, prior, seed).map(|(e, _)| e)
}

/// One-directional variant: gaps only along paths denoised under `y1`.
pub fn kl_distance<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    prior: TimestepPrior,
    seed: u64,
) -> Result<DistanceEstimate> {
    check_request(model, y1, y2, k)?;
    let support = prior.support(schedule.steps())?;
    let iterations = run_iterations(model, y1, y2, k, schedule, seed, false)?;
    let per_iteration = reduce_iterations(&iterations, &support, false);
    Ok(DistanceEstimate::from_iterations(Method::Kl, pair_of(y1, y2), per_iteration, Some(prior)))
}
