use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_BETA_MIN: f64 = 0.1;
pub const DEFAULT_BETA_MAX: f64 = 20.0;
pub const DEFAULT_STEPS: usize = 10;

/// Tolerance used when matching a continuous time against the grid.
const GRID_TOL: f64 = 1e-12;

/// Variance-preserving SDE with a linear noise rate `beta(t) = beta_min + t (beta_max - beta_min)`
/// on `t in [0, 1]`, discretized on the uniform grid `t_i = i / T`, `i = 1..=T`.
///
/// Coefficients are stored per grid step; step `i` lives at index `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    steps: usize,
    beta_min: f64,
    beta_max: f64,
    times: Vec<f64>,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
    g2: Vec<f64>,
}

/// Schedule coefficients at one grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePoint {
    /// Grid index in `1..=T`.
    pub step: usize,
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl TimePoint {
    pub fn variance(&self, data_scale: f64) -> f64 {
        self.alpha * self.alpha * data_scale * data_scale + self.sigma * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
        }
    }
}

impl DiffusionSchedule {
    pub fn new(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_min.is_finite() && beta_max.is_finite() && beta_min > 0.0 && beta_max > beta_min)
        {
            return Err(Error::invalid(format!(
                "beta bounds must satisfy 0 < beta_min < beta_max, got [{beta_min}, {beta_max}]"
            )));
        }
        let times: Vec<f64> = (1..=steps).map(|i| i as f64 / steps as f64).collect();
        let mut schedule = Self {
            steps,
            beta_min,
            beta_max,
            times,
            alpha: Vec::with_capacity(steps),
            sigma: Vec::with_capacity(steps),
            g2: Vec::with_capacity(steps),
        };
        for i in 0..steps {
            let t = schedule.times[i];
            let (a, s) = schedule.marginal(t);
            schedule.alpha.push(a);
            schedule.sigma.push(s);
            schedule.g2.push(schedule.beta(t));
        }
        Ok(schedule)
    }

    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        Self::new(p.steps, p.beta_min, p.beta_max)
    }

    /// Default continuous schedule (`beta in [0.1, 20]`) with `steps` grid points.
    pub fn with_steps(steps: usize) -> Result<Self> {
        Self::new(steps, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            steps: self.steps,
            beta_min: self.beta_min,
            beta_max: self.beta_max,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// `(alpha(t), sigma(t))` of the continuous process at any `t in [0, 1]`.
    pub fn marginal(&self, t: f64) -> (f64, f64) {
        let integral = self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t;
        ((-0.5 * integral).exp(), (-(-integral).exp_m1()).sqrt())
    }

    /// Grid spacing `1 / T`.
    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn g2(&self) -> &[f64] {
        &self.g2
    }

    /// Coefficients at grid step `step in 1..=T`.
    pub fn at(&self, step: usize) -> Result<TimePoint> {
        if step == 0 || step > self.steps {
            return Err(Error::invalid(format!(
                "step {step} outside grid 1..={}",
                self.steps
            )));
        }
        let i = step - 1;
        Ok(TimePoint {
            step,
            t: self.times[i],
            alpha: self.alpha[i],
            sigma: self.sigma[i],
        })
    }

    /// Grid step whose time equals `t` (within 1e-12).
    pub fn step_of(&self, t: f64) -> Result<usize> {
        if !t.is_finite() {
            return Err(Error::invalid("time is not finite"));
        }
        let scaled = t * self.steps as f64;
        let step = scaled.round();
        if step < 1.0 || step > self.steps as f64 || (t - step / self.steps as f64).abs() > GRID_TOL
        {
            return Err(Error::invalid(format!(
                "time {t} is not on the {}-step grid",
                self.steps
            )));
        }
        Ok(step as usize)
    }

    /// Identifier of the continuous schedule, independent of the step count.
    pub fn family_id(&self) -> String {
        format!("vp-linear(beta_min={},beta_max={})", self.beta_min, self.beta_max)
    }

    /// Identifier of this discretization.
    pub fn id(&self) -> String {
        format!("{}/T={}", self.family_id(), self.steps)
    }

    /// Hex SHA-256 of [`Self::family_id`]; checkpoints store it so a network is
    /// never evaluated under a different noise process than it was trained on.
    pub fn family_hash(&self) -> String {
        let digest = Sha256::digest(self.family_id().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
