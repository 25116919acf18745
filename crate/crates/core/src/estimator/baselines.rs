//! Non-path baselines: score gap at the first or last denoising step, and the
//! squared distance between the two denoised outputs.

use rayon::prelude::*;

use super::path::iteration_draws;
use super::{check_request, squared_gap, DistanceEstimate, Method};
use crate::error::Result;
use crate::score::{ConditionId, ScoreModel};
use crate::sde::{reverse_denoise_with_noise, DiffusionSchedule};

fn pair_of(y1: &ConditionId, y2: &ConditionId) -> (String, String) {
    (y1.display.clone(), y2.display.clone())
}

fn gap_at<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    step: usize,
    y1: &ConditionId,
    y2: &ConditionId,
    schedule: &DiffusionSchedule,
) -> Result<f64> {
    if y1.id == y2.id {
        return Ok(0.0);
    }
    let at = schedule.at(step)?;
    let a = model.score(x, &at, y1).map_err(|e| e.at_step(step))?;
    let b = model.score(x, &at, y2).map_err(|e| e.at_step(step))?;
    Ok(squared_gap(&a, &b))
}

/// Terminal states of the two conditional paths of iteration `i`.
fn terminal_pair<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    schedule: &DiffusionSchedule,
    seed: u64,
    i: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (iter_seed, x_t, noise) = iteration_draws(seed, i, schedule.steps(), model.dim());
    let a = reverse_denoise_with_noise(&x_t, y1, model, schedule, noise.clone(), iter_seed)?;
    if y1.id == y2.id {
        let x0 = a.terminal().to_vec();
        return Ok((x0.clone(), x0));
    }
    let b = reverse_denoise_with_noise(&x_t, y2, model, schedule, noise, iter_seed)?;
    Ok((a.terminal().to_vec(), b.terminal().to_vec()))
}

/// Gap at `t_T` with `x ~ N(0, I)`.
pub fn d_initial<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<DistanceEstimate> {
    check_request(model, y1, y2, k)?;
    let per_iteration = (0..k)
        .into_par_iter()
        .map(|i| {
            let (_, x_t, _) = iteration_draws(seed, i, schedule.steps(), model.dim());
            gap_at(model, &x_t, schedule.steps(), y1, y2, schedule)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceEstimate::from_iterations(Method::Initial, pair_of(y1, y2), per_iteration, None))
}

/// Gap at the last grid time `t_1`, averaged over the outputs of both
/// conditional paths (an equal mixture of the two output distributions).
pub fn d_final<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<DistanceEstimate> {
    check_request(model, y1, y2, k)?;
    let per_iteration = (0..k)
        .into_par_iter()
        .map(|i| {
            let (a, b) = terminal_pair(model, y1, y2, schedule, seed, i)?;
            let ga = gap_at(model, &a, 1, y1, y2, schedule)?;
            let gb = gap_at(model, &b, 1, y1, y2, schedule)?;
            Ok(0.5 * (ga + gb))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceEstimate::from_iterations(Method::Final, pair_of(y1, y2), per_iteration, None))
}

/// `|x_0^{y1} - x_0^{y2}|^2` for paths sharing `x_T` and all increments.
pub fn d_output<M: ScoreModel + ?Sized>(
    model: &M,
    y1: &ConditionId,
    y2: &ConditionId,
    k: usize,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<DistanceEstimate> {
    check_request(model, y1, y2, k)?;
    let per_iteration = (0..k)
        .into_par_iter()
        .map(|i| {
            let (a, b) = terminal_pair(model, y1, y2, schedule, seed, i)?;
            Ok(squared_gap(&a, &b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceEstimate::from_iterations(Method::Output, pair_of(y1, y2), per_iteration, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{AnalyticModel, GmmConditionSpec, Vocabulary};

    fn model() -> (AnalyticModel, ConditionId, ConditionId) {
        let vocab = Vocabulary::from_labels(&["a", "b"]).unwrap();
        let m = AnalyticModel::gmm(
            vocab.clone(),
            vec![
                GmmConditionSpec::uniform(vec![(vec![-1.0, 0.0], 0.4), (vec![1.0, 0.0], 0.4)]).unwrap(),
                GmmConditionSpec::uniform(vec![(vec![0.5, 1.0], 0.6)]).unwrap(),
            ],
        )
        .unwrap();
        (m, vocab.entries()[0].clone(), vocab.entries()[1].clone())
    }

    #[test]
    fn baselines_vanish_on_identical_prompts() {
        let (m, a, _) = model();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        assert_eq!(d_initial(&m, &a, &a, 3, &s, 1).unwrap().value, 0.0);
        assert_eq!(d_final(&m, &a, &a, 3, &s, 1).unwrap().value, 0.0);
        assert_eq!(d_output(&m, &a, &a, 3, &s, 1).unwrap().value, 0.0);
    }

    #[test]
    fn baselines_are_positive_and_symmetric() {
        let (m, a, b) = model();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        for f in [d_initial::<AnalyticModel>, d_final, d_output] {
            let ab = f(&m, &a, &b, 4, &s, 3).unwrap();
            let ba = f(&m, &b, &a, 4, &s, 3).unwrap();
            assert!(ab.value > 0.0);
            assert_eq!(ab.value, ba.value);
            assert_eq!(ab.k, 4);
            assert!(ab.prior.is_none());
        }
    }
}
