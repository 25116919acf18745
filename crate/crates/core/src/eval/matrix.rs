use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig, Method};
use crate::score::{ScoreModel, Vocabulary};
use crate::sde::DiffusionSchedule;

/// Pairwise distances over a vocabulary, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub method: Method,
    pub steps: usize,
    pub config: EstimatorConfig,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Row-major upper triangle `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        upper_pairs(self.len()).into_iter()
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        self.pairs().map(|(i, j)| self.values[i][j]).collect()
    }

    /// Mean over pairs in the same group and over pairs in different groups.
    /// `group[i]` labels the cluster of entry `i`.
    pub fn within_between_means(&self, group: &[usize]) -> Result<(f64, f64)> {
        if group.len() != self.len() {
            return Err(Error::invalid("group labels do not match matrix size"));
        }
        let (mut w, mut nw, mut b, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for (i, j) in self.pairs() {
            if group[i] == group[j] {
                w += self.values[i][j];
                nw += 1;
            } else {
                b += self.values[i][j];
                nb += 1;
            }
        }
        if nw == 0 || nb == 0 {
            return Err(Error::invalid("need both within- and between-group pairs"));
        }
        Ok((w / nw as f64, b / nb as f64))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "label")?;
        for l in &self.labels {
            write!(out, ",{}", csv_field(l))?;
        }
        writeln!(out)?;
        for (l, row) in self.labels.iter().zip(&self.values) {
            write!(out, "{}", csv_field(l))?;
            for v in row {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Estimate every unordered pair once (upper triangle), mirror, and zero the
/// diagonal. Directional methods fill both triangles instead. All pairs use
/// `config.seed`, so every pair sees the same draws.
pub fn pairwise_matrix<M: ScoreModel + ?Sized>(
    model: &M,
    vocab: &Vocabulary,
    method: Method,
    schedule: &DiffusionSchedule,
    config: &EstimatorConfig,
) -> Result<SimilarityMatrix> {
    let n = vocab.len();
    if n < 2 {
        return Err(Error::invalid("pairwise matrix needs at least two prompts"));
    }
    let entries = vocab.entries();
    let mut pairs = upper_pairs(n);
    if !method.is_symmetric() {
        pairs.extend(upper_pairs(n).into_iter().map(|(i, j)| (j, i)));
    }
    let upper = pairs
        .par_iter()
        .map(|&(i, j)| {
            estimate(method, model, &entries[i], &entries[j], schedule, config)
                .map(|e| e.value)
                .map_err(|e| Error::Pair {
                    a: entries[i].display.clone(),
                    b: entries[j].display.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(upper) {
        values[i][j] = v;
        if method.is_symmetric() {
            values[j][i] = v;
        }
    }
    Ok(SimilarityMatrix {
        labels: entries.iter().map(|c| c.display.clone()).collect(),
        values,
        method,
        steps: schedule.steps(),
        config: *config,
    })
}
