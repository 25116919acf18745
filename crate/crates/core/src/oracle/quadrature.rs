//! Trapezoid quadrature of expected squared score gaps for mixture worlds in
//! one or two dimensions.

use rayon::prelude::*;

use super::grid_coefficients;
use crate::error::{Error, Result};
use crate::estimator::TimestepPrior;
use crate::score::GmmConditionSpec;
use crate::sde::DiffusionSchedule;

/// Points per axis at the default resolution.
pub const DEFAULT_RESOLUTION: usize = 2048;
/// Grid half-width in standard deviations of the widest component.
const TRUNCATION: f64 = 8.0;
/// Maximum relative disagreement between resolution `n` and `n / 2`.
const SELF_CHECK_TOL: f64 = 1e-3;

/// Noised mixture `sum_k w_k N(alpha mu_k, v_k I)`.
struct Marginal {
    log_w: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<f64>,
}

impl Marginal {
    fn new(spec: &GmmConditionSpec, alpha: f64, sigma: f64) -> Self {
        Self {
            log_w: spec.components.iter().map(|c| c.weight.ln()).collect(),
            means: spec
                .components
                .iter()
                .map(|c| c.mean.iter().map(|m| alpha * m).collect())
                .collect(),
            vars: spec
                .components
                .iter()
                .map(|c| alpha * alpha * c.scale * c.scale + sigma * sigma)
                .collect(),
        }
    }

    /// Density and score at `x`.
    fn eval(&self, x: &[f64], score: &mut [f64]) -> f64 {
        let d = x.len() as f64;
        let mut logs = [0.0f64; 16];
        let mut heap;
        let logs: &mut [f64] = if self.vars.len() <= 16 {
            &mut logs[..self.vars.len()]
        } else {
            heap = vec![0.0; self.vars.len()];
            &mut heap
        };
        let mut max = f64::NEG_INFINITY;
        for (k, l) in logs.iter_mut().enumerate() {
            let v = self.vars[k];
            let sq: f64 = x.iter().zip(&self.means[k]).map(|(a, b)| (a - b) * (a - b)).sum();
            *l = self.log_w[k] - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * sq / v;
            max = max.max(*l);
        }
        let mut z = 0.0;
        score.iter_mut().for_each(|s| *s = 0.0);
        for (k, l) in logs.iter().enumerate() {
            let r = (l - max).exp();
            z += r;
            let v = self.vars[k];
            for (s, (xi, mi)) in score.iter_mut().zip(x.iter().zip(&self.means[k])) {
                *s -= r * (xi - mi) / v;
            }
        }
        score.iter_mut().for_each(|s| *s /= z);
        max.exp() * z
    }

    fn extent(&self, axis: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (m, v) in self.means.iter().zip(&self.vars) {
            lo = lo.min(m[axis] - TRUNCATION * v.sqrt());
            hi = hi.max(m[axis] + TRUNCATION * v.sqrt());
        }
        (lo, hi)
    }
}

/// `integral |s_a(x) - s_b(x)|^2 sum_j c_j p_j(x) dx` on an `n`-point (per axis)
/// trapezoid grid spanning the density terms.
fn integrate(density: &[(f64, &Marginal)], gap: (&Marginal, &Marginal), dim: usize, n: usize) -> f64 {
    let axes: Vec<(f64, f64)> = (0..dim)
        .map(|ax| {
            density.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, m)| {
                let (l, h) = m.extent(ax);
                (lo.min(l), hi.max(h))
            })
        })
        .collect();
    let nodes: Vec<(Vec<f64>, f64)> = axes
        .iter()
        .map(|&(lo, hi)| {
            let h = (hi - lo) / (n - 1) as f64;
            let pts = (0..n).map(|i| lo + i as f64 * h).collect();
            (pts, h)
        })
        .collect();
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let integrand = |x: &[f64]| {
        let mut sa = [0.0; 2];
        let mut sb = [0.0; 2];
        let mut scratch = [0.0; 2];
        gap.0.eval(x, &mut sa[..dim]);
        gap.1.eval(x, &mut sb[..dim]);
        let g: f64 = (0..dim).map(|j| (sa[j] - sb[j]) * (sa[j] - sb[j])).sum();
        let p: f64 = density.iter().map(|(c, m)| c * m.eval(x, &mut scratch[..dim])).sum();
        g * p
    };
    match dim {
        1 => {
            let (pts, h) = &nodes[0];
            pts.iter().enumerate().map(|(i, &x)| weight(i) * integrand(&[x])).sum::<f64>() * h
        }
        2 => {
            let (px, hx) = &nodes[0];
            let (py, hy) = &nodes[1];
            px.par_iter()
                .enumerate()
                .map(|(i, &x)| {
                    let row: f64 = py
                        .iter()
                        .enumerate()
                        .map(|(j, &y)| weight(j) * integrand(&[x, y]))
                        .sum();
                    weight(i) * row
                })
                .sum::<f64>()
                * hx
                * hy
        }
        _ => unreachable!("dimension checked by caller"),
    }
}

fn check_specs(spec1: &GmmConditionSpec, spec2: &GmmConditionSpec, resolution: usize) -> Result<usize> {
    spec1.validate()?;
    spec2.validate()?;
    let dim = spec1.dim();
    if spec2.dim() != dim {
        return Err(Error::invalid("mixture specs disagree on dimension"));
    }
    if dim > 2 {
        return Err(Error::Unsupported(format!("quadrature oracle supports d <= 2, got {dim}")));
    }
    if resolution < 16 {
        return Err(Error::invalid("quadrature resolution must be at least 16"));
    }
    Ok(dim)
}

/// Evaluate `f(n)` at `n` and `n / 2` and insist they agree.
fn self_checked(resolution: usize, f: impl Fn(usize) -> f64) -> Result<f64> {
    let fine = f(resolution);
    let coarse = f(resolution / 2);
    let diff = (fine - coarse).abs();
    if diff > SELF_CHECK_TOL * fine.abs() && diff > 1e-300 {
        return Err(Error::Accuracy(format!(
            "resolution {resolution} gives {fine}, half resolution gives {coarse}"
        )));
    }
    Ok(fine)
}

/// Expected squared score gap under the equal mixture of the two noised
/// conditions, averaged over the prior's steps and doubled to match the
/// two-direction sum of the path estimator.
pub fn gmm_expected_gap(
    spec1: &GmmConditionSpec,
    spec2: &GmmConditionSpec,
    schedule: &DiffusionSchedule,
    prior: TimestepPrior,
    resolution: usize,
) -> Result<f64> {
    let dim = check_specs(spec1, spec2, resolution)?;
    let support = prior.support(schedule.steps())?;
    let coeffs = grid_coefficients(schedule);
    self_checked(resolution, |n| {
        let total: f64 = support
            .iter()
            .map(|&i| {
                let (_, a, s) = coeffs[i - 1];
                let m1 = Marginal::new(spec1, a, s);
                let m2 = Marginal::new(spec2, a, s);
                integrate(&[(0.5, &m1), (0.5, &m2)], (&m1, &m2), dim, n)
            })
            .sum();
        2.0 * total / support.len() as f64
    })
}

/// Expected squared gap under the first condition's noised marginal only
/// (the one-directional estimator's target).
pub fn gmm_expected_gap_one_sided(
    spec1: &GmmConditionSpec,
    spec2: &GmmConditionSpec,
    schedule: &DiffusionSchedule,
    prior: TimestepPrior,
    resolution: usize,
) -> Result<f64> {
    let dim = check_specs(spec1, spec2, resolution)?;
    let support = prior.support(schedule.steps())?;
    let coeffs = grid_coefficients(schedule);
    self_checked(resolution, |n| {
        let total: f64 = support
            .iter()
            .map(|&i| {
                let (_, a, s) = coeffs[i - 1];
                let m1 = Marginal::new(spec1, a, s);
                let m2 = Marginal::new(spec2, a, s);
                integrate(&[(1.0, &m1)], (&m1, &m2), dim, n)
            })
            .sum();
        total / support.len() as f64
    })
}

/// Squared gap of the step-1 scores averaged over the equal mixture of the
/// clean data distributions.
pub fn gmm_final_gap(
    spec1: &GmmConditionSpec,
    spec2: &GmmConditionSpec,
    schedule: &DiffusionSchedule,
    resolution: usize,
) -> Result<f64> {
    let dim = check_specs(spec1, spec2, resolution)?;
    let (_, a, s) = grid_coefficients(schedule)[0];
    let d1 = Marginal::new(spec1, 1.0, 0.0);
    let d2 = Marginal::new(spec2, 1.0, 0.0);
    let g1 = Marginal::new(spec1, a, s);
    let g2 = Marginal::new(spec2, a, s);
    self_checked(resolution, |n| integrate(&[(0.5, &d1), (0.5, &d2)], (&g1, &g2), dim, n))
}
