//! Forward perturbation and reverse-time sampling for the VP-SDE.
//!
//! Forward: `dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw`.
//! Reverse: `dx = [f(x, t) - g(t)^2 s(x, t | y)] dt + g(t) dw_bar`, integrated
//! from `t = 1` down to `t = 0` on the schedule grid.

mod schedule;

pub use schedule::{
    DiffusionSchedule, ScheduleParams, TimePoint, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN,
    DEFAULT_STEPS,
};

use crate::error::{Error, Result};
use crate::rng;
use crate::score::{ConditionId, ScoreModel};

/// Sample from `p_t(. | x0) = N(alpha_t x0, sigma_t^2 I)` using the supplied
/// standard-normal `noise`.
pub fn perturb(x0: &[f64], t: f64, noise: &[f64], schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
    if x0.len() != noise.len() {
        return Err(Error::invalid(format!(
            "x0 has dimension {} but noise has {}",
            x0.len(),
            noise.len()
        )));
    }
    let at = schedule.at(schedule.step_of(t)?)?;
    Ok(x0
        .iter()
        .zip(noise)
        .map(|(x, n)| at.alpha * x + at.sigma * n)
        .collect())
}

/// One step of a reverse-time discretization, from grid step `at.step` to the
/// next lower grid time (or to `t = 0` from step 1).
pub trait ReverseSampler: Send + Sync {
    fn step(
        &self,
        x: &[f64],
        at: &TimePoint,
        score: &[f64],
        noise: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Vec<f64>;
}

/// Euler–Maruyama on the reverse SDE.
#[derive(Debug, Clone, Copy, Default)]
pub struct EulerMaruyama;

impl ReverseSampler for EulerMaruyama {
    fn step(
        &self,
        x: &[f64],
        at: &TimePoint,
        score: &[f64],
        noise: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Vec<f64> {
        let beta = schedule.g2()[at.step - 1];
        let dt = schedule.dt();
        let diffusion = (beta * dt).sqrt();
        // x_{t - dt} = x_t - [f(x_t) - g^2 s] dt + g sqrt(dt) z, with f = -beta x / 2.
        x.iter()
            .zip(score)
            .zip(noise)
            .map(|((&xi, &si), &zi)| xi + (0.5 * beta * xi + beta * si) * dt + diffusion * zi)
            .collect()
    }
}

/// Single Euler–Maruyama reverse step at grid time `t`.
pub fn reverse_step(
    x: &[f64],
    t: f64,
    score: &[f64],
    noise: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    if x.len() != score.len() || x.len() != noise.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: x {}, score {}, noise {}",
            x.len(),
            score.len(),
            noise.len()
        )));
    }
    let step = schedule.step_of(t)?;
    check_finite(score, step)?;
    let at = schedule.at(step)?;
    Ok(EulerMaruyama.step(x, &at, score, noise, schedule))
}

fn check_finite(score: &[f64], step: usize) -> Result<()> {
    if let Some(i) = score.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            step,
            detail: format!("score component {i} is {}", score[i]),
        });
    }
    Ok(())
}

/// Brownian increments for a full reverse pass, ordered by denoising step
/// (`increments[0]` is used when stepping down from `t_T`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    pub increments: Vec<Vec<f64>>,
}

impl NoiseRecord {
    pub fn draw(rng: &mut rng::SimRng, steps: usize, dim: usize) -> Self {
        Self {
            increments: (0..steps).map(|_| rng::standard_normal(rng, dim)).collect(),
        }
    }

    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self {
            increments: vec![vec![0.0; dim]; steps],
        }
    }
}

/// A denoised path `x_T, ..., x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(t, x_t)` from `t_T` down to `t = 0`; exactly `T + 1` entries.
    pub states: Vec<(f64, Vec<f64>)>,
    /// Score evaluated at each pre-step state, aligned with `states[..T]`.
    pub scores: Vec<Vec<f64>>,
    pub noise: NoiseRecord,
    pub prompt: ConditionId,
    pub seed: u64,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        &self.states.last().expect("trajectory is never empty").1
    }

    pub fn dim(&self) -> usize {
        self.states[0].1.len()
    }
}

/// Runs the reverse pass from `x_t` with caller-supplied score evaluation.
///
/// `eval` is called once per pre-step state, from step `T` down to step 1,
/// and returns the score used for stepping. Returns the visited states
/// (`T + 1` of them, the last at `t = 0`).
pub fn integrate_reverse<F>(
    x_start: &[f64],
    noise: &NoiseRecord,
    schedule: &DiffusionSchedule,
    sampler: &dyn ReverseSampler,
    mut eval: F,
) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: FnMut(&TimePoint, &[f64]) -> Result<Vec<f64>>,
{
    let steps = schedule.steps();
    if noise.increments.len() != steps {
        return Err(Error::invalid(format!(
            "noise record has {} increments for a {steps}-step schedule",
            noise.increments.len()
        )));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x_start.to_vec();
    for (k, step) in (1..=steps).rev().enumerate() {
        let at = schedule.at(step)?;
        let score = eval(&at, &x).map_err(|e| e.at_step(step))?;
        if score.len() != x.len() {
            return Err(Error::Numeric {
                step,
                detail: format!("model returned {} components for a {}-d state", score.len(), x.len()),
            });
        }
        check_finite(&score, step)?;
        let next = sampler.step(&x, &at, &score, &noise.increments[k], schedule);
        states.push((at.t, std::mem::replace(&mut x, next)));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            step: 0,
            detail: format!("terminal state component {i} is {}", x[i]),
        });
    }
    states.push((0.0, x));
    Ok(states)
}

/// Denoise `x_T` under prompt `y`, drawing the Brownian increments from `seed`.
pub fn reverse_denoise<M: ScoreModel + ?Sized>(
    x_t: &[f64],
    y: &ConditionId,
    model: &M,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = rng::rng_from_seed(seed);
    let noise = NoiseRecord::draw(&mut rng, schedule.steps(), x_t.len());
    reverse_denoise_with_noise(x_t, y, model, schedule, noise, seed)
}

/// Like [`reverse_denoise`] but with explicit increments, e.g. reused from a
/// trajectory under another prompt.
pub fn reverse_denoise_with_noise<M: ScoreModel + ?Sized>(
    x_t: &[f64],
    y: &ConditionId,
    model: &M,
    schedule: &DiffusionSchedule,
    noise: NoiseRecord,
    seed: u64,
) -> Result<Trajectory> {
    if x_t.len() != model.dim() {
        return Err(Error::invalid(format!(
            "x_T has dimension {} but the model expects {}",
            x_t.len(),
            model.dim()
        )));
    }
    let mut scores = Vec::with_capacity(schedule.steps());
    let states = integrate_reverse(x_t, &noise, schedule, &EulerMaruyama, |at, x| {
        let s = model.score(x, at, y)?;
        scores.push(s.clone());
        Ok(s)
    })?;
    Ok(Trajectory {
        states,
        scores,
        noise,
        prompt: y.clone(),
        seed,
    })
}
