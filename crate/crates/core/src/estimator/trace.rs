//! Score-difference traces: the per-step squared gaps behind a path estimate,
//! stored as JSON lines with one record per (iteration, direction):
//!
//! ```text
//! {"pair":["a","b"],"iter":1,"dir":"y1","sq_gaps":[...T values...],"seed":123,
//!  "meta":{"model":"...","T":10,"guidance":7.5,"schedule":"..."}}
//! ```
//!
//! `iter` counts from 1. `dir` names the prompt the path was denoised under.
//! `sq_gaps[j]` belongs to grid step `j + 1`, i.e. ascending time.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::path::reduce_iterations;
use super::{DistanceEstimate, Method, TimestepPrior};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Y1,
    Y2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: String,
    #[serde(rename = "T")]
    pub steps: usize,
    pub guidance: f64,
    pub schedule: String,
    /// Producer-specific keys (prediction convention, prompt template, ...),
    /// carried through unchanged.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl TraceMeta {
    pub fn new(model: impl Into<String>, steps: usize, guidance: f64, schedule: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            steps,
            guidance,
            schedule: schedule.into(),
            extra: BTreeMap::new(),
        }
    }
}

/// JSON Schema (draft 2020-12) of a single line. Rules spanning lines are
/// enforced by [`read_trace`]: one shared `pair` and `meta`, `len(sq_gaps) ==
/// meta.T`, both directions for every `iter`, iterations numbered `1..=k`,
/// and one seed per iteration.
pub const TRACE_RECORD_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "Score-difference trace record",
  "type": "object",
  "additionalProperties": false,
  "required": ["pair", "iter", "dir", "sq_gaps", "seed", "meta"],
  "properties": {
    "pair": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
    "iter": {"type": "integer", "minimum": 1},
    "dir": {"enum": ["y1", "y2"]},
    "sq_gaps": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    "seed": {"type": "integer", "minimum": 0, "maximum": 18446744073709551615},
    "meta": {
      "type": "object",
      "required": ["model", "T", "guidance", "schedule"],
      "properties": {
        "model": {"type": "string"},
        "T": {"type": "integer", "minimum": 1},
        "guidance": {"type": "number"},
        "schedule": {"type": "string"}
      },
      "additionalProperties": true
    }
  }
}"#;

/// One JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub pair: [String; 2],
    pub iter: usize,
    pub dir: Direction,
    pub sq_gaps: Vec<f64>,
    pub seed: u64,
    pub meta: TraceMeta,
}

/// Gaps of one Monte-Carlo iteration. `y2` is empty for one-directional runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceIteration {
    pub seed: u64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDifferenceTrace {
    pub pair: (String, String),
    pub meta: TraceMeta,
    pub iterations: Vec<TraceIteration>,
}

impl ScoreDifferenceTrace {
    pub fn k(&self) -> usize {
        self.iterations.len()
    }

    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.iterations.iter().enumerate().flat_map(move |(i, it)| {
            [(Direction::Y1, &it.y1), (Direction::Y2, &it.y2)]
                .into_iter()
                .map(move |(dir, gaps)| TraceRecord {
                    pair: [self.pair.0.clone(), self.pair.1.clone()],
                    iter: i + 1,
                    dir,
                    sq_gaps: gaps.clone(),
                    seed: it.seed,
                    meta: self.meta.clone(),
                })
        })
    }

    /// Legal but suspicious content. An empty list means the trace is clean.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (side, label) in [("first", &self.pair.0), ("second", &self.pair.1)] {
            if label.trim().is_empty() {
                out.push(format!("{side} prompt is empty"));
            }
        }
        if self.meta.model.trim().is_empty() {
            out.push("meta.model is empty".into());
        }
        if self.meta.schedule.trim().is_empty() {
            out.push("meta.schedule is empty".into());
        }
        if self.meta.guidance < 0.0 {
            out.push(format!("negative guidance scale {}", self.meta.guidance));
        }
        let mut first_use: BTreeMap<u64, usize> = BTreeMap::new();
        for (i, it) in self.iterations.iter().enumerate() {
            if let Some(j) = first_use.insert(it.seed, i + 1) {
                out.push(format!("iterations {j} and {} share seed {}", i + 1, it.seed));
            }
        }
        let all_zero = self.iterations.iter().all(|it| it.y1.iter().chain(&it.y2).all(|g| *g == 0.0));
        if all_zero && self.pair.0 != self.pair.1 {
            out.push("every gap is zero for two different prompts".into());
        }
        out
    }

    /// Structural checks shared by the reader and by traces built in memory.
    pub fn validate(&self) -> Result<()> {
        if self.iterations.is_empty() {
            return Err(Error::invalid("trace has no iterations"));
        }
        if self.meta.steps == 0 {
            return Err(Error::invalid("trace has T = 0"));
        }
        for (i, it) in self.iterations.iter().enumerate() {
            for (dir, gaps) in [("y1", &it.y1), ("y2", &it.y2)] {
                check_gaps(gaps, self.meta.steps)
                    .map_err(|e| Error::invalid(format!("iteration {} direction {dir}: {e}", i + 1)))?;
            }
        }
        Ok(())
    }
}

fn check_gaps(gaps: &[f64], steps: usize) -> std::result::Result<(), String> {
    if gaps.len() != steps {
        return Err(format!("expected {steps} gaps, found {}", gaps.len()));
    }
    if let Some(j) = gaps.iter().position(|g| !g.is_finite() || *g < 0.0) {
        return Err(format!("gap {j} is {} (must be finite and non-negative)", gaps[j]));
    }
    Ok(())
}

pub fn write_trace<W: Write>(trace: &ScoreDifferenceTrace, mut out: W) -> Result<()> {
    trace.validate()?;
    for rec in trace.records() {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &ScoreDifferenceTrace, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}

/// (line, seed, gaps) of one record, keyed by iteration then direction.
type Seen = (usize, u64, Vec<f64>);

/// Parse and validate a JSON-lines trace. Every failure names the offending
/// line (1-based).
pub fn read_trace<R: BufRead>(input: R) -> Result<ScoreDifferenceTrace> {
    let parse_err = |line: usize, detail: String| Error::Parse { line, detail };
    let mut head: Option<([String; 2], TraceMeta)> = None;
    let mut seen: BTreeMap<usize, BTreeMap<Direction, Seen>> = BTreeMap::new();
    let mut last_line = 0;

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        last_line = lineno;
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.iter == 0 {
            return Err(parse_err(lineno, "iterations are numbered from 1".into()));
        }
        if rec.meta.steps == 0 {
            return Err(parse_err(lineno, "meta.T must be positive".into()));
        }
        check_gaps(&rec.sq_gaps, rec.meta.steps).map_err(|d| parse_err(lineno, d))?;
        match &head {
            None => head = Some((rec.pair.clone(), rec.meta.clone())),
            Some((pair, meta)) => {
                if *pair != rec.pair {
                    return Err(parse_err(lineno, format!("pair {:?} differs from {:?}", rec.pair, pair)));
                }
                if *meta != rec.meta {
                    return Err(parse_err(lineno, "meta differs from the first record".into()));
                }
            }
        }
        let slot = seen.entry(rec.iter).or_default();
        if slot.contains_key(&rec.dir) {
            return Err(parse_err(lineno, format!("duplicate record for iteration {} {:?}", rec.iter, rec.dir)));
        }
        if let Some((_, (_, seed, _))) = slot.iter().next() {
            if *seed != rec.seed {
                return Err(parse_err(lineno, format!("seed {} disagrees with the other direction", rec.seed)));
            }
        }
        slot.insert(rec.dir, (lineno, rec.seed, rec.sq_gaps));
    }

    let (pair, meta) = head.ok_or_else(|| parse_err(last_line.max(1), "trace is empty".into()))?;
    let mut iterations = Vec::with_capacity(seen.len());
    for (expected, (iter, mut dirs)) in (1..).zip(seen) {
        let any_line = dirs.values().map(|v| v.0).min().unwrap_or(last_line);
        if iter != expected {
            return Err(parse_err(any_line, format!("iteration {expected} is missing (found {iter})")));
        }
        let (y1, y2) = match (dirs.remove(&Direction::Y1), dirs.remove(&Direction::Y2)) {
            (Some(a), Some(b)) => (a, b),
            (Some(_), None) => return Err(parse_err(any_line, format!("iteration {iter} has no y2 record"))),
            (None, Some(_)) => return Err(parse_err(any_line, format!("iteration {iter} has no y1 record"))),
            (None, None) => unreachable!("slot created on insert"),
        };
        iterations.push(TraceIteration {
            seed: y1.1,
            y1: y1.2,
            y2: y2.2,
        });
    }
    Ok(ScoreDifferenceTrace {
        pair: (pair[0].clone(), pair[1].clone()),
        meta,
        iterations,
    })
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<ScoreDifferenceTrace> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

/// Recompute the symmetrized estimate from recorded gaps, with the same
/// arithmetic as the live estimator.
pub fn estimate_from_trace(trace: &ScoreDifferenceTrace, prior: TimestepPrior) -> Result<DistanceEstimate> {
    trace.validate()?;
    let support = prior.support(trace.meta.steps)?;
    let per_iteration = reduce_iterations(&trace.iterations, &support, true);
    Ok(DistanceEstimate::from_iterations(
        Method::Conjure,
        trace.pair.clone(),
        per_iteration,
        Some(prior),
    ))
}
