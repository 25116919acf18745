//! A small conditional score network trained with denoising score matching.
//!
//! Input is `[x, time-embedding(t), condition-embedding(y)]`; the output is the
//! score itself (not the noise). Condition 0 is the null prompt and is used
//! for `cond_dropout` of the training batches so the same network also
//! provides an unconditional branch for guidance.
//!
//! The loss is the `sigma_t^2`-weighted DSM objective
//! `E |sigma_t s(x_t, t | y) + eps|^2` with `x_t = alpha_t x_0 + sigma_t eps`,
//! i.e. `E sigma_t^2 |s + eps / sigma_t|^2`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_dim, ConditionId, ScoreModel, Vocabulary, NULL_CONDITION};
use crate::error::{Error, Result};
use crate::rng;
use crate::sde::{DiffusionSchedule, ScheduleParams, TimePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate of the cosine decay.
    pub min_learning_rate: f64,
    /// Probability of replacing the label with the null condition.
    pub cond_dropout: f64,
    /// Training times are drawn from `U(t_min, 1)`.
    pub t_min: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 128,
            hidden_layers: 3,
            time_embed_dim: 16,
            cond_embed_dim: 16,
            epochs: 60,
            batch_size: 256,
            learning_rate: 2e-3,
            min_learning_rate: 2e-5,
            cond_dropout: 0.1,
            t_min: 0.02,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: usize,
    /// Training-set DSM loss after each epoch, evaluated on one fixed draw of
    /// `(t, noise)` per sample so consecutive epochs are directly comparable.
    pub loss_curve: Vec<f64>,
    /// Mean minibatch loss per epoch (fresh draws every step).
    #[serde(default)]
    pub batch_loss_curve: Vec<f64>,
    pub validation_loss: Option<f64>,
    pub train_samples: usize,
    pub validation_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: ConditionId,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Trained conditional score network.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyScoreNet {
    pub(crate) vocab: Vocabulary,
    pub(crate) dim: usize,
    pub(crate) schedule: ScheduleParams,
    pub(crate) config: TrainConfig,
    pub(crate) layers: Vec<Dense>,
    /// Row 0 is the null condition; row `i` is vocabulary entry `i - 1`.
    pub(crate) cond_embed: Array2<f64>,
    pub(crate) report: TrainReport,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

fn time_embedding(t: f64, dim: usize, out: &mut [f64]) {
    let half = dim / 2;
    for k in 0..half {
        let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
        let arg = 1000.0 * t * freq;
        out[k] = arg.sin();
        out[half + k] = arg.cos();
    }
}

/// Activations kept for the backward pass.
struct Forward {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    out: Array2<f64>,
}

impl ToyScoreNet {
    fn init(
        vocab: Vocabulary,
        dim: usize,
        schedule: ScheduleParams,
        config: TrainConfig,
        rng: &mut rng::SimRng,
    ) -> Self {
        let input = dim + config.time_embed_dim + config.cond_embed_dim;
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        widths.push(dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound)),
                    b: Array1::from_shape_fn(w[1], |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        let cond_embed = Array2::from_shape_fn((vocab.len() + 1, config.cond_embed_dim), |_| {
            StandardNormal.sample(rng)
        });
        Self {
            vocab,
            dim,
            schedule,
            report: TrainReport {
                seed: config.seed,
                epochs: 0,
                loss_curve: Vec::new(),
                batch_loss_curve: Vec::new(),
                validation_loss: None,
                train_samples: 0,
                validation_samples: 0,
            },
            config,
            layers,
            cond_embed,
        }
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        self.schedule
    }

    fn embed_row(&self, y: &ConditionId) -> Result<usize> {
        if y.is_null() {
            return Ok(0);
        }
        self.vocab
            .position(y)
            .map(|p| p + 1)
            .ok_or_else(|| Error::invalid(format!("prompt {y} is not in the network vocabulary")))
    }

    fn input_width(&self) -> usize {
        self.dim + self.config.time_embed_dim + self.config.cond_embed_dim
    }

    fn build_inputs(&self, xs: ArrayView2<f64>, ts: &[f64], rows: &[usize]) -> Array2<f64> {
        let n = xs.nrows();
        let te = self.config.time_embed_dim;
        let mut input = Array2::zeros((n, self.input_width()));
        for i in 0..n {
            let mut row = input.row_mut(i);
            let row = row.as_slice_mut().expect("fresh array is contiguous");
            for j in 0..self.dim {
                row[j] = xs[[i, j]];
            }
            time_embedding(ts[i], te, &mut row[self.dim..self.dim + te]);
            for (dst, src) in row[self.dim + te..].iter_mut().zip(self.cond_embed.row(rows[i])) {
                *dst = *src;
            }
        }
        input
    }

    fn forward(&self, input: Array2<f64>) -> Forward {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = vec![input];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = post[i].dot(&layer.w) + &layer.b;
            if i == last {
                return Forward { pre, post, out: z };
            }
            let a = z.mapv(silu);
            pre.push(z);
            post.push(a);
        }
        unreachable!("network has at least one layer")
    }

    /// Scores for a batch of points sharing nothing but the network.
    pub fn score_batch(&self, xs: ArrayView2<f64>, ts: &[f64], ys: &[ConditionId]) -> Result<Array2<f64>> {
        if xs.ncols() != self.dim || xs.nrows() != ts.len() || ts.len() != ys.len() {
            return Err(Error::invalid("batch shapes disagree"));
        }
        let rows = ys.iter().map(|y| self.embed_row(y)).collect::<Result<Vec<_>>>()?;
        Ok(self.forward(self.build_inputs(xs, ts, &rows)).out)
    }

    fn eval_one(&self, x: &[f64], t: f64, row: usize) -> Result<Vec<f64>> {
        check_dim(x, self.dim)?;
        let xs = ArrayView2::from_shape((1, self.dim), x).expect("length checked");
        let out = self.forward(self.build_inputs(xs, &[t], &[row])).out;
        Ok(out.into_raw_vec_and_offset().0)
    }
}

impl ScoreModel for ToyScoreNet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn name(&self) -> String {
        format!(
            "toy-net({}x{}, seed {})",
            self.config.hidden_layers, self.config.hidden_width, self.config.seed
        )
    }

    fn score(&self, x: &[f64], at: &TimePoint, y: &ConditionId) -> Result<Vec<f64>> {
        let row = self.embed_row(y)?;
        self.eval_one(x, at.t, row)
    }

    fn unconditional_score(&self, x: &[f64], at: &TimePoint) -> Result<Vec<f64>> {
        self.eval_one(x, at.t, NULL_CONDITION as usize)
    }
}

/// Adam state for one flat parameter block.
struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamSlot {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, param: &mut [f64], grad: &[f64], lr: f64, t: i32) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let c1 = 1.0 - B1.powi(t);
        let c2 = 1.0 - B2.powi(t);
        for (((p, g), m), v) in param.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
    }
}

/// One noised minibatch: inputs and DSM targets.
struct Batch {
    xs: Array2<f64>,
    ts: Vec<f64>,
    rows: Vec<usize>,
    sigmas: Vec<f64>,
    eps: Array2<f64>,
}

fn noised_batch(
    samples: &[(Vec<f64>, usize)],
    idx: &[usize],
    schedule: &DiffusionSchedule,
    config: &TrainConfig,
    dropout: bool,
    rng: &mut rng::SimRng,
) -> Batch {
    let dim = samples[0].0.len();
    let n = idx.len();
    let mut xs = Array2::zeros((n, dim));
    let mut eps = Array2::zeros((n, dim));
    let mut ts = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (i, &k) in idx.iter().enumerate() {
        let (x0, row) = &samples[k];
        let t = rng.random_range(config.t_min..1.0);
        let (alpha, sigma) = schedule.marginal(t);
        for j in 0..dim {
            let e: f64 = StandardNormal.sample(rng);
            eps[[i, j]] = e;
            xs[[i, j]] = alpha * x0[j] + sigma * e;
        }
        let drop = dropout && rng.random::<f64>() < config.cond_dropout;
        rows.push(if drop { 0 } else { *row });
        ts.push(t);
        sigmas.push(sigma);
    }
    Batch { xs, ts, rows, sigmas, eps }
}

/// Mean of `|sigma s + eps|^2` and its gradient with respect to the output.
fn dsm_loss(out: &Array2<f64>, batch: &Batch) -> (f64, Array2<f64>) {
    let n = out.nrows() as f64;
    let mut grad = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    for (i, (o_row, e_row)) in out.outer_iter().zip(batch.eps.outer_iter()).enumerate() {
        let sigma = batch.sigmas[i];
        for j in 0..o_row.len() {
            let r = sigma * o_row[j] + e_row[j];
            loss += r * r;
            grad[[i, j]] = 2.0 * sigma * r / n;
        }
    }
    (loss / n, grad)
}

fn validate_dataset(data: &[LabeledSample], vocab: &Vocabulary) -> Result<usize> {
    let first = data.first().ok_or_else(|| Error::invalid("training dataset is empty"))?;
    let dim = first.x.len();
    if dim == 0 {
        return Err(Error::invalid("training samples have no components"));
    }
    for (i, s) in data.iter().enumerate() {
        if s.x.len() != dim {
            return Err(Error::invalid(format!("sample {i} has dimension {}", s.x.len())));
        }
        if s.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        if s.y.is_null() || vocab.position(&s.y).is_none() {
            return Err(Error::invalid(format!("sample {i} has label {} outside the vocabulary", s.y)));
        }
    }
    Ok(dim)
}

/// Training samples used for the per-epoch fixed-draw loss.
const PROBE_SAMPLES: usize = 4096;

/// Mean DSM loss over `idx` with `(t, noise)` drawn from a stream fixed by
/// `stream`, without label dropout.
fn fixed_draw_loss(
    net: &ToyScoreNet,
    data: &[(Vec<f64>, usize)],
    idx: &[usize],
    schedule: &DiffusionSchedule,
    config: &TrainConfig,
    stream: u64,
) -> f64 {
    let mut r = rng::rng_from_seed(rng::derive_seed(config.seed, stream));
    let mut total = 0.0;
    for chunk in idx.chunks(config.batch_size) {
        let batch = noised_batch(data, chunk, schedule, config, false, &mut r);
        let out = net.forward(net.build_inputs(batch.xs.view(), &batch.ts, &batch.rows)).out;
        total += dsm_loss(&out, &batch).0 * chunk.len() as f64;
    }
    total / idx.len() as f64
}

/// Train a [`ToyScoreNet`] on labeled clean samples. Deterministic given
/// `config.seed`.
pub fn train_toy(
    data: &[LabeledSample],
    vocab: &Vocabulary,
    schedule: &DiffusionSchedule,
    config: &TrainConfig,
) -> Result<ToyScoreNet> {
    let dim = validate_dataset(data, vocab)?;
    if config.epochs == 0 || config.batch_size == 0 || config.hidden_layers == 0 {
        return Err(Error::invalid("epochs, batch size and hidden layers must be positive"));
    }
    if !config.time_embed_dim.is_multiple_of(2) {
        return Err(Error::invalid("time embedding dimension must be even"));
    }
    if !(config.t_min > 0.0 && config.t_min < 1.0) {
        return Err(Error::invalid("t_min must lie in (0, 1)"));
    }
    let mut rng = rng::rng_from_seed(config.seed);
    let mut net = ToyScoreNet::init(vocab.clone(), dim, schedule.params(), config.clone(), &mut rng);

    let mut samples: Vec<(Vec<f64>, usize)> = data
        .iter()
        .map(|s| (s.x.clone(), vocab.position(&s.y).expect("validated") + 1))
        .collect();
    samples.shuffle(&mut rng);
    let n_val = if samples.len() >= 10 {
        ((samples.len() as f64 * config.validation_fraction).round() as usize).min(samples.len() - 1)
    } else {
        0
    };
    let validation = samples.split_off(samples.len() - n_val);
    let train = samples;

    let mut adam_w: Vec<AdamSlot> = net.layers.iter().map(|l| AdamSlot::new(l.w.len())).collect();
    let mut adam_b: Vec<AdamSlot> = net.layers.iter().map(|l| AdamSlot::new(l.b.len())).collect();
    let mut adam_e = AdamSlot::new(net.cond_embed.len());
    let te_end = dim + config.time_embed_dim;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut batch_loss_curve = Vec::with_capacity(config.epochs);
    let probe: Vec<usize> = (0..train.len().min(PROBE_SAMPLES)).collect();
    let mut step = 0i32;
    let batches_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs * batches_per_epoch) as f64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let progress = step as f64 / total_steps;
            let lr = config.min_learning_rate
                + 0.5 * (config.learning_rate - config.min_learning_rate)
                    * (1.0 + (std::f64::consts::PI * progress).cos());
            step += 1;

            let batch = noised_batch(&train, chunk, schedule, config, true, &mut rng);
            let input = net.build_inputs(batch.xs.view(), &batch.ts, &batch.rows);
            let fwd = net.forward(input);
            let (loss, mut delta) = dsm_loss(&fwd.out, &batch);
            if !loss.is_finite() {
                return Err(Error::TrainingFailure { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;

            // Backward pass, last layer first.
            let n_layers = net.layers.len();
            let mut grads_w = Vec::with_capacity(n_layers);
            let mut grads_b = Vec::with_capacity(n_layers);
            for li in (0..n_layers).rev() {
                grads_w.push(fwd.post[li].t().dot(&delta));
                grads_b.push(delta.sum_axis(Axis(0)));
                let upstream = delta.dot(&net.layers[li].w.t());
                delta = if li > 0 {
                    let mut d = upstream;
                    d.zip_mut_with(&fwd.pre[li - 1], |g, &z| *g *= silu_grad(z));
                    d
                } else {
                    upstream
                };
            }
            grads_w.reverse();
            grads_b.reverse();

            let mut grad_e = Array2::<f64>::zeros(net.cond_embed.raw_dim());
            let cond_grad = delta.slice(s![.., te_end..]);
            for (i, &row) in batch.rows.iter().enumerate() {
                let mut dst = grad_e.row_mut(row);
                dst += &cond_grad.row(i);
            }

            for li in 0..n_layers {
                let layer = &mut net.layers[li];
                adam_w[li].update(layer.w.as_slice_mut().unwrap(), grads_w[li].as_slice().unwrap(), lr, step);
                adam_b[li].update(layer.b.as_slice_mut().unwrap(), grads_b[li].as_slice().unwrap(), lr, step);
            }
            adam_e.update(net.cond_embed.as_slice_mut().unwrap(), grad_e.as_slice().unwrap(), lr, step);
        }
        let mean = epoch_loss / train.len() as f64;
        let fixed = fixed_draw_loss(&net, &train, &probe, schedule, config, u64::MAX - 1);
        for loss in [mean, fixed] {
            if !loss.is_finite() {
                return Err(Error::TrainingFailure { epoch, loss });
            }
        }
        batch_loss_curve.push(mean);
        loss_curve.push(fixed);
    }

    let validation_loss = (!validation.is_empty()).then(|| {
        let idx: Vec<usize> = (0..validation.len()).collect();
        fixed_draw_loss(&net, &validation, &idx, schedule, config, u64::MAX)
    });

    net.report = TrainReport {
        seed: config.seed,
        epochs: config.epochs,
        loss_curve,
        batch_loss_curve,
        validation_loss,
        train_samples: train.len(),
        validation_samples: validation.len(),
    };
    Ok(net)
}
