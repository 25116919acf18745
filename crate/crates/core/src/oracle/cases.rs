//! Fixed oracle scenarios shared by the `oracle-check` command and the
//! acceptance tests.

use rand::Rng;

use super::{gaussian_conjure_closed_form, gmm_expected_gap, OracleReport, Tolerance};
use crate::error::Result;
use crate::estimator::{conjure_distance, DistanceEstimate, TimestepPrior};
use crate::rng;
use crate::score::{AnalyticModel, GaussianConditionSpec, GmmComponent, GmmConditionSpec, Vocabulary};
use crate::sde::DiffusionSchedule;

/// Random equal-scale Gaussian pair with a random schedule and prior.
#[derive(Debug, Clone)]
pub struct GaussianCase {
    pub name: String,
    pub a: GaussianConditionSpec,
    pub b: GaussianConditionSpec,
    pub schedule: DiffusionSchedule,
    pub prior: TimestepPrior,
}

impl GaussianCase {
    /// Runs the estimator and compares at 1e-8 relative error.
    pub fn run(&self, k: usize, seed: u64) -> Result<(OracleReport, DistanceEstimate)> {
        let vocab = Vocabulary::from_labels(&["a", "b"])?;
        let model = AnalyticModel::gaussian(vocab.clone(), vec![self.a.clone(), self.b.clone()])?;
        let est = conjure_distance(
            &model,
            &vocab.entries()[0],
            &vocab.entries()[1],
            k,
            &self.schedule,
            self.prior,
            seed,
        )?;
        let exact = gaussian_conjure_closed_form(&self.a, &self.b, &self.schedule, self.prior)?;
        Ok((OracleReport::new(&self.name, exact, &est, Tolerance::Relative { rel: 1e-8 }), est))
    }
}

pub fn gaussian_suite(cases: usize, seed: u64) -> Vec<GaussianCase> {
    let mut r = rng::rng_from_seed(seed);
    (0..cases)
        .map(|i| {
            let dim = r.random_range(1..=4);
            let scale = r.random_range(0.3..2.0);
            let mut mean = || (0..dim).map(|_| r.random_range(-3.0..3.0)).collect::<Vec<f64>>();
            let (ma, mb) = (mean(), mean());
            let steps = r.random_range(1..=40);
            let beta_min = r.random_range(0.05..0.5);
            let beta_max = r.random_range(5.0..25.0);
            let prior = match r.random_range(0..3) {
                0 => TimestepPrior::UniformAll,
                1 => TimestepPrior::Cumulative(r.random_range(1..=steps)),
                _ => TimestepPrior::Pointwise(r.random_range(1..=steps)),
            };
            GaussianCase {
                name: format!("gaussian-{i}"),
                a: GaussianConditionSpec::new(ma, scale).expect("valid by construction"),
                b: GaussianConditionSpec::new(mb, scale).expect("valid by construction"),
                schedule: DiffusionSchedule::new(steps, beta_min, beta_max).expect("valid by construction"),
                prior,
            }
        })
        .collect()
}

/// Mixture pair with its quadrature settings.
#[derive(Debug, Clone)]
pub struct GmmCase {
    pub name: &'static str,
    pub a: GmmConditionSpec,
    pub b: GmmConditionSpec,
    /// Fine enough that Euler–Maruyama marginals track the exact ones.
    pub steps: usize,
    pub resolution: usize,
}

/// Name of the deliberately asymmetric pair (narrow vs. bimodal).
pub const SKEWED_CASE: &str = "skewed-1d";

impl GmmCase {
    pub fn schedule(&self) -> DiffusionSchedule {
        DiffusionSchedule::with_steps(self.steps).expect("fixed valid schedule")
    }

    pub fn model(&self) -> (AnalyticModel, Vocabulary) {
        let vocab = Vocabulary::from_labels(&["a", "b"]).expect("fixed labels");
        let model =
            AnalyticModel::gmm(vocab.clone(), vec![self.a.clone(), self.b.clone()]).expect("fixed valid specs");
        (model, vocab)
    }

    pub fn expected(&self) -> Result<f64> {
        gmm_expected_gap(&self.a, &self.b, &self.schedule(), TimestepPrior::UniformAll, self.resolution)
    }

    /// Estimator within 3 standard errors of the quadrature value.
    pub fn run(&self, k: usize, seed: u64) -> Result<(OracleReport, DistanceEstimate)> {
        let (model, vocab) = self.model();
        let est = conjure_distance(
            &model,
            &vocab.entries()[0],
            &vocab.entries()[1],
            k,
            &self.schedule(),
            TimestepPrior::UniformAll,
            seed,
        )?;
        let exact = self.expected()?;
        Ok((OracleReport::new(self.name, exact, &est, Tolerance::StdErrors { z: 3.0 }), est))
    }
}

fn comp(weight: f64, mean: &[f64], scale: f64) -> GmmComponent {
    GmmComponent { weight, mean: mean.to_vec(), scale }
}

fn mix(components: Vec<GmmComponent>) -> GmmConditionSpec {
    GmmConditionSpec::new(components).expect("fixed valid mixture")
}

/// The five fixed mixture pairs.
pub fn gmm_suite() -> Vec<GmmCase> {
    vec![
        GmmCase {
            name: "bimodal-vs-gaussian-1d",
            a: mix(vec![comp(0.5, &[-1.0], 0.5), comp(0.5, &[1.0], 0.5)]),
            b: mix(vec![comp(1.0, &[0.5], 0.7)]),
            steps: 200,
            resolution: DEFAULT_RESOLUTION_1D,
        },
        GmmCase {
            name: SKEWED_CASE,
            a: mix(vec![comp(1.0, &[0.0], 0.3)]),
            b: mix(vec![comp(0.5, &[-1.5], 0.4), comp(0.5, &[1.5], 0.4)]),
            steps: 200,
            resolution: DEFAULT_RESOLUTION_1D,
        },
        GmmCase {
            name: "unequal-scales-1d",
            a: mix(vec![comp(1.0, &[0.2], 0.4)]),
            b: mix(vec![comp(1.0, &[-0.3], 1.2)]),
            steps: 200,
            resolution: DEFAULT_RESOLUTION_1D,
        },
        GmmCase {
            name: "two-vs-two-2d",
            a: mix(vec![comp(0.3, &[-1.0, 0.5], 0.5), comp(0.7, &[1.0, -0.5], 0.6)]),
            b: mix(vec![comp(0.5, &[0.0, 1.0], 0.5), comp(0.5, &[0.5, -1.0], 0.7)]),
            steps: 100,
            resolution: DEFAULT_RESOLUTION_2D,
        },
        GmmCase {
            name: "one-vs-three-2d",
            a: mix(vec![comp(1.0, &[0.3, 0.3], 0.8)]),
            b: mix(vec![
                comp(0.2, &[-1.5, 0.0], 0.4),
                comp(0.5, &[1.0, 1.0], 0.5),
                comp(0.3, &[0.5, -1.5], 0.6),
            ]),
            steps: 100,
            resolution: DEFAULT_RESOLUTION_2D,
        },
    ]
}

const DEFAULT_RESOLUTION_1D: usize = super::DEFAULT_RESOLUTION;
/// Tensor grids grow quadratically; 512 per axis already passes the
/// half-resolution self-check by orders of magnitude for these pairs.
const DEFAULT_RESOLUTION_2D: usize = 512;
