use serde::{Deserialize, Serialize};

use super::{check_dim, ConditionId, GaussianConditionSpec, GmmComponent, GmmConditionSpec, ScoreModel, Vocabulary};
use crate::error::{Error, Result};
use crate::sde::TimePoint;

/// Data distribution of one prompt in an analytic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionSpec {
    Gaussian(GaussianConditionSpec),
    Gmm(GmmConditionSpec),
}

impl ConditionSpec {
    pub fn dim(&self) -> usize {
        match self {
            ConditionSpec::Gaussian(g) => g.dim(),
            ConditionSpec::Gmm(m) => m.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConditionSpec::Gaussian(g) => g.validate(),
            ConditionSpec::Gmm(m) => m.validate(),
        }
    }

    pub fn score_at(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        match self {
            ConditionSpec::Gaussian(g) => g.score_at(x, at),
            ConditionSpec::Gmm(m) => m.score_at(x, at),
        }
    }

    /// The same distribution viewed as a mixture.
    pub fn as_mixture(&self) -> GmmConditionSpec {
        match self {
            ConditionSpec::Gaussian(g) => GmmConditionSpec {
                components: vec![GmmComponent {
                    weight: 1.0,
                    mean: g.mean.clone(),
                    scale: g.scale,
                }],
            },
            ConditionSpec::Gmm(m) => m.clone(),
        }
    }
}

/// Exact scores for a vocabulary of analytic conditions. The unconditional
/// branch is the equal-weight mixture of all conditions.
#[derive(Debug, Clone)]
pub struct AnalyticModel {
    vocab: Vocabulary,
    specs: Vec<ConditionSpec>,
    unconditional: GmmConditionSpec,
    dim: usize,
}

impl AnalyticModel {
    pub fn new(vocab: Vocabulary, specs: Vec<ConditionSpec>) -> Result<Self> {
        if vocab.len() != specs.len() {
            return Err(Error::invalid(format!(
                "{} prompts but {} condition specs",
                vocab.len(),
                specs.len()
            )));
        }
        let dim = specs
            .first()
            .ok_or_else(|| Error::invalid("analytic model needs at least one condition"))?
            .dim();
        for s in &specs {
            s.validate()?;
            if s.dim() != dim {
                return Err(Error::invalid("condition specs disagree on dimension"));
            }
        }
        let n = specs.len() as f64;
        let mut components = Vec::new();
        for s in &specs {
            for c in s.as_mixture().components {
                components.push(GmmComponent {
                    weight: c.weight / n,
                    ..c
                });
            }
        }
        // Renormalize so rounding in weight/n never trips the sum check.
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
        }
        Ok(Self {
            vocab,
            specs,
            unconditional: GmmConditionSpec { components },
            dim,
        })
    }

    pub fn gaussian(vocab: Vocabulary, specs: Vec<GaussianConditionSpec>) -> Result<Self> {
        Self::new(vocab, specs.into_iter().map(ConditionSpec::Gaussian).collect())
    }

    pub fn gmm(vocab: Vocabulary, specs: Vec<GmmConditionSpec>) -> Result<Self> {
        Self::new(vocab, specs.into_iter().map(ConditionSpec::Gmm).collect())
    }

    pub fn spec(&self, y: &ConditionId) -> Result<&ConditionSpec> {
        let pos = self
            .vocab
            .position(y)
            .ok_or_else(|| Error::invalid(format!("prompt {y} is not in the vocabulary")))?;
        Ok(&self.specs[pos])
    }

    pub fn specs(&self) -> &[ConditionSpec] {
        &self.specs
    }
}

impl ScoreModel for AnalyticModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn name(&self) -> String {
        "analytic".to_string()
    }

    fn score(&self, x: &[f64], at: &TimePoint, y: &ConditionId) -> Result<Vec<f64>> {
        check_dim(x, self.dim)?;
        if y.is_null() {
            return self.unconditional_score(x, at);
        }
        self.spec(y)?.score_at(x, at)
    }

    fn unconditional_score(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        self.unconditional.score_at(x, at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{cfg_score, gaussian_score, gmm_score};
    use crate::sde::DiffusionSchedule;
    use proptest::prelude::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Central finite differences with step `1e-4 (1 + |x|)`.
    fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-4 * (1.0 + norm(x));
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    fn log_normal(x: &[f64], mean: &[f64], var: f64) -> f64 {
        let d = x.len() as f64;
        let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * sq / var
    }

    fn assert_close_rel(a: &[f64], b: &[f64], rel: f64) {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        assert!(
            norm(&diff) <= rel * (1.0 + norm(b)),
            "{a:?} vs {b:?} (rel {rel})"
        );
    }

    #[test]
    fn gaussian_score_vanishes_at_mode() {
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let spec = GaussianConditionSpec::new(vec![1.0, -2.0], 0.7).unwrap();
        let at = s.at(4).unwrap();
        let mode: Vec<f64> = spec.mean.iter().map(|m| at.alpha * m).collect();
        let out = gaussian_score(&mode, 0.4, &spec, &s).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn standard_gaussian_score_is_negative_identity() {
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let spec = GaussianConditionSpec::new(vec![0.0, 0.0], 1.0).unwrap();
        for step in 1..=10 {
            let at = s.at(step).unwrap();
            let out = spec.score_at(&[0.5, -3.0], &at).unwrap();
            assert!((out[0] + 0.5).abs() < 1e-12 && (out[1] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_score_rejects_off_grid_and_bad_dim() {
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let spec = GaussianConditionSpec::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!(gaussian_score(&[0.0, 0.0], 0.123, &spec, &s).is_err());
        assert!(gaussian_score(&[0.0], 0.1, &spec, &s).is_err());
        assert!(GaussianConditionSpec::new(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn gmm_construction_rejects_degenerate_weights() {
        let bad = GmmConditionSpec::new(vec![
            GmmComponent { weight: 0.5, mean: vec![0.0], scale: 1.0 },
            GmmComponent { weight: 0.4, mean: vec![1.0], scale: 1.0 },
        ]);
        assert!(bad.is_err());
        let neg = GmmConditionSpec::new(vec![
            GmmComponent { weight: 1.5, mean: vec![0.0], scale: 1.0 },
            GmmComponent { weight: -0.5, mean: vec![1.0], scale: 1.0 },
        ]);
        assert!(neg.is_err());
        assert!(GmmConditionSpec::new(vec![]).is_err());
    }

    #[test]
    fn single_component_mixture_matches_gaussian() {
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let g = GaussianConditionSpec::new(vec![0.3, -1.1], 0.6).unwrap();
        let m = ConditionSpec::Gaussian(g.clone()).as_mixture();
        for step in 1..=10 {
            let t = s.times()[step - 1];
            let x = [0.9 - step as f64 * 0.1, 0.25];
            let a = gaussian_score(&x, t, &g, &s).unwrap();
            let b = gmm_score(&x, t, &m, &s).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn symmetric_mixture_has_zero_score_on_midplane() {
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let m = GmmConditionSpec::uniform(vec![(vec![-2.0, 1.0], 0.5), (vec![2.0, 1.0], 0.5)]).unwrap();
        for step in 1..=10 {
            let at = s.at(step).unwrap();
            let x = [0.0, 0.3];
            let out = m.score_at(&x, &at).unwrap();
            assert!(out[0].abs() < 1e-12, "step {step}: {out:?}");
        }
    }

    #[test]
    fn gmm_score_is_stable_far_from_mass() {
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let m = GmmConditionSpec::uniform(vec![(vec![-2.0], 0.05), (vec![2.0], 0.05)]).unwrap();
        let at = s.at(1).unwrap();
        let out = m.score_at(&[1e3], &at).unwrap();
        assert!(out[0].is_finite());
    }

    #[test]
    fn unconditional_branch_is_mixture_of_conditions() {
        let vocab = Vocabulary::from_labels(&["a", "b"]).unwrap();
        let model = AnalyticModel::gaussian(
            vocab,
            vec![
                GaussianConditionSpec::new(vec![-1.0], 0.5).unwrap(),
                GaussianConditionSpec::new(vec![1.0], 0.5).unwrap(),
            ],
        )
        .unwrap();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let at = s.at(2).unwrap();
        let u = model.unconditional_score(&[0.0], &at).unwrap();
        assert!(u[0].abs() < 1e-12);
        let via_null = model.score(&[0.4], &at, &ConditionId::null()).unwrap();
        assert_eq!(via_null, model.unconditional_score(&[0.4], &at).unwrap());
    }

    #[test]
    fn cfg_endpoints() {
        let vocab = Vocabulary::from_labels(&["a", "b"]).unwrap();
        let model = AnalyticModel::gaussian(
            vocab.clone(),
            vec![
                GaussianConditionSpec::new(vec![-1.0, 0.5], 0.5).unwrap(),
                GaussianConditionSpec::new(vec![1.0, 0.0], 0.8).unwrap(),
            ],
        )
        .unwrap();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let at = s.at(3).unwrap();
        let y = vocab.entries()[0].clone();
        let x = [0.2, -0.7];
        let cond = model.score(&x, &at, &y).unwrap();
        let uncond = model.unconditional_score(&x, &at).unwrap();
        assert_close_rel(&cfg_score(&x, &at, &y, 1.0, &model).unwrap(), &cond, 1e-12);
        assert_eq!(cfg_score(&x, &at, &y, 0.0, &model).unwrap(), uncond);
    }

    proptest! {
        #[test]
        fn gaussian_score_matches_finite_differences(
            m in prop::collection::vec(-3.0f64..3.0, 2),
            x in prop::collection::vec(-4.0f64..4.0, 2),
            scale in 0.2f64..2.0,
            step in 1usize..=10,
        ) {
            let s = DiffusionSchedule::with_steps(10).unwrap();
            let spec = GaussianConditionSpec::new(m.clone(), scale).unwrap();
            let at = s.at(step).unwrap();
            let var = at.variance(scale);
            let mean: Vec<f64> = m.iter().map(|v| at.alpha * v).collect();
            let fd = fd_gradient(|p| log_normal(p, &mean, var), &x);
            let got = gaussian_score(&x, at.t, &spec, &s).unwrap();
            assert_close_rel(&got, &fd, 1e-5);
        }

        #[test]
        fn gmm_score_matches_finite_differences(
            means in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..4),
            scales in prop::collection::vec(0.3f64..1.5, 3),
            raw_w in prop::collection::vec(0.1f64..1.0, 3),
            x in prop::collection::vec(-4.0f64..4.0, 2),
            step in 1usize..=10,
        ) {
            let n = means.len();
            let total: f64 = raw_w[..n].iter().sum();
            let comps: Vec<GmmComponent> = (0..n)
                .map(|i| GmmComponent { weight: raw_w[i] / total, mean: means[i].clone(), scale: scales[i] })
                .collect();
            let spec = GmmConditionSpec { components: comps.clone() };
            let s = DiffusionSchedule::with_steps(10).unwrap();
            let at = s.at(step).unwrap();
            let logp = |p: &[f64]| {
                comps
                    .iter()
                    .map(|c| {
                        let mean: Vec<f64> = c.mean.iter().map(|v| at.alpha * v).collect();
                        c.weight * log_normal(p, &mean, at.variance(c.scale)).exp()
                    })
                    .sum::<f64>()
                    .ln()
            };
            let fd = fd_gradient(logp, &x);
            let got = spec.score_at(&x, &at).unwrap();
            assert_close_rel(&got, &fd, 1e-5);
        }

        #[test]
        fn cfg_is_affine_in_guidance(w1 in -5.0f64..10.0, w2 in -5.0f64..10.0, x in prop::collection::vec(-3.0f64..3.0, 2)) {
            let vocab = Vocabulary::from_labels(&["a", "b"]).unwrap();
            let model = AnalyticModel::gaussian(
                vocab.clone(),
                vec![
                    GaussianConditionSpec::new(vec![-1.0, 0.5], 0.5).unwrap(),
                    GaussianConditionSpec::new(vec![1.0, 0.0], 0.8).unwrap(),
                ],
            ).unwrap();
            let s = DiffusionSchedule::with_steps(10).unwrap();
            let at = s.at(5).unwrap();
            let y = vocab.entries()[1].clone();
            let f = |w: f64| cfg_score(&x, &at, &y, w, &model).unwrap();
            let (a, b, c, z) = (f(w1), f(w2), f(w1 + w2), f(0.0));
            for i in 0..2 {
                prop_assert!(((a[i] + b[i]) - (c[i] + z[i])).abs() < 1e-10);
            }
        }
    }
}
