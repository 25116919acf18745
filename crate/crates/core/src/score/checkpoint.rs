use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::toynet::{Dense, ToyScoreNet, TrainConfig, TrainReport};
use super::Vocabulary;
use crate::error::{Error, Result};
use crate::sde::{DiffusionSchedule, ScheduleParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "conjure-toy-score-net";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    weight: Matrix,
    bias: Vec<f64>,
}

/// On-disk form of a trained network (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    pub version: u32,
    /// SHA-256 of the continuous schedule family the network was trained on.
    pub schedule_hash: String,
    pub schedule_family: String,
    beta_min: f64,
    beta_max: f64,
    pub vocabulary: Vocabulary,
    pub dim: usize,
    pub config: TrainConfig,
    pub report: TrainReport,
    layers: Vec<Layer>,
    cond_embed: Matrix,
}

fn to_matrix(a: &Array2<f64>) -> Matrix {
    Matrix {
        rows: a.nrows(),
        cols: a.ncols(),
        values: a.iter().copied().collect(),
    }
}

fn from_matrix(m: Matrix) -> Result<Array2<f64>> {
    Array2::from_shape_vec((m.rows, m.cols), m.values)
        .map_err(|e| Error::invalid(format!("checkpoint matrix has wrong shape: {e}")))
}

impl Checkpoint {
    pub fn from_net(net: &ToyScoreNet) -> Self {
        let schedule = DiffusionSchedule::from_params(net.schedule).expect("network schedule is valid");
        Self {
            format: FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            schedule_hash: schedule.family_hash(),
            schedule_family: schedule.family_id(),
            beta_min: net.schedule.beta_min,
            beta_max: net.schedule.beta_max,
            vocabulary: net.vocab.clone(),
            dim: net.dim,
            config: net.config.clone(),
            report: net.report.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weight: to_matrix(&l.w),
                    bias: l.b.to_vec(),
                })
                .collect(),
            cond_embed: to_matrix(&net.cond_embed),
        }
    }

    /// Rebuild the network for use under `schedule`; refuses when the
    /// schedule family differs from the training one.
    pub fn into_net(self, schedule: &DiffusionSchedule) -> Result<ToyScoreNet> {
        if self.format != FORMAT {
            return Err(Error::invalid(format!("not a toy-net checkpoint (format {:?})", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.schedule_hash != schedule.family_hash() {
            return Err(Error::ScheduleMismatch {
                expected: self.schedule_family,
                found: schedule.family_id(),
            });
        }
        let layers = self
            .layers
            .into_iter()
            .map(|l| {
                let w = from_matrix(l.weight)?;
                if w.ncols() != l.bias.len() {
                    return Err(Error::invalid("checkpoint bias length does not match weights"));
                }
                Ok(Dense { w, b: Array1::from(l.bias) })
            })
            .collect::<Result<Vec<_>>>()?;
        let cond_embed = from_matrix(self.cond_embed)?;
        let input = self.dim + self.config.time_embed_dim + self.config.cond_embed_dim;
        let chained = layers.windows(2).all(|w| w[0].w.ncols() == w[1].w.nrows());
        if layers.is_empty()
            || layers[0].w.nrows() != input
            || layers.last().unwrap().w.ncols() != self.dim
            || !chained
            || cond_embed.nrows() != self.vocabulary.len() + 1
            || cond_embed.ncols() != self.config.cond_embed_dim
        {
            return Err(Error::invalid("checkpoint layer shapes are inconsistent"));
        }
        Ok(ToyScoreNet {
            vocab: self.vocabulary,
            dim: self.dim,
            schedule: ScheduleParams {
                steps: schedule.steps(),
                beta_min: self.beta_min,
                beta_max: self.beta_max,
            },
            config: self.config,
            layers,
            cond_embed,
            report: self.report,
        })
    }
}

pub fn save_checkpoint(net: &ToyScoreNet, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &Checkpoint::from_net(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, schedule: &DiffusionSchedule) -> Result<ToyScoreNet> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let ckpt: Checkpoint = serde_json::from_reader(file)?;
    ckpt.into_net(schedule)
}
