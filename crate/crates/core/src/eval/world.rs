//! Synthetic vocabularies with known hierarchical similarity.
//!
//! A label tree such as `((puppy,poodle),(whale,shark))` is embedded by
//! placing the children of every node evenly on a circle around it, in a
//! random 2-plane (on a line in one dimension), with the radius shrinking by a
//! fixed ratio per level. Each leaf becomes an isotropic Gaussian condition,
//! and the ground-truth distance between two leaves is the 2-Wasserstein
//! distance of their Gaussians, which for equal scales is the distance between
//! the means.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::score::{AnalyticModel, GaussianConditionSpec, LabeledSample, Vocabulary};

/// The default two-cluster world: four dogs, four sea animals.
pub const DEFAULT8: &str = "((puppy,poodle,dalmatian,pug),(whale,shark,dolphin,sealion))";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelTree {
    Leaf(String),
    Node(Vec<LabelTree>),
}

impl LabelTree {
    pub fn parse(spec: &str) -> Result<Self> {
        let mut p = Parser { src: spec.as_bytes(), pos: 0 };
        let tree = p.node()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::invalid(format!("trailing input at byte {} of tree spec", p.pos)));
        }
        Ok(tree)
    }

    /// Leaves in order, each with its path of child indices from the root.
    pub fn leaves(&self) -> Vec<(String, Vec<usize>)> {
        fn walk(t: &LabelTree, path: &mut Vec<usize>, out: &mut Vec<(String, Vec<usize>)>) {
            match t {
                LabelTree::Leaf(l) => out.push((l.clone(), path.clone())),
                LabelTree::Node(cs) => {
                    for (i, c) in cs.iter().enumerate() {
                        path.push(i);
                        walk(c, path, out);
                        path.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Same tree with every child list reversed.
    pub fn mirrored(&self) -> Self {
        match self {
            LabelTree::Leaf(l) => LabelTree::Leaf(l.clone()),
            LabelTree::Node(cs) => LabelTree::Node(cs.iter().rev().map(LabelTree::mirrored).collect()),
        }
    }
}

impl std::fmt::Display for LabelTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelTree::Leaf(l) => f.write_str(l),
            LabelTree::Node(cs) => {
                f.write_str("(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn node(&mut self) -> Result<LabelTree> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b'(') {
            self.pos += 1;
            let mut children = vec![self.node()?];
            loop {
                self.skip_ws();
                match self.src.get(self.pos) {
                    Some(b',') => {
                        self.pos += 1;
                        children.push(self.node()?);
                    }
                    Some(b')') => {
                        self.pos += 1;
                        return Ok(LabelTree::Node(children));
                    }
                    _ => return Err(Error::invalid(format!("expected ',' or ')' at byte {}", self.pos))),
                }
            }
        }
        let start = self.pos;
        while self.pos < self.src.len() && !matches!(self.src[self.pos], b'(' | b')' | b',') {
            self.pos += 1;
        }
        let label = std::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| Error::invalid("tree spec is not UTF-8"))?
            .trim();
        if label.is_empty() {
            return Err(Error::invalid(format!("empty label at byte {start}")));
        }
        Ok(LabelTree::Leaf(label.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dim: usize,
    /// Distance between two sibling children of the root.
    pub separation: f64,
    /// Radius ratio between consecutive levels; below 0.5 so subtrees never
    /// overlap.
    pub radius_ratio: f64,
    pub leaf_scale: f64,
    /// Angular jitter of children, as a fraction of the even spacing. Applied
    /// to nodes with three or more children so their distances are not tied.
    pub angle_jitter: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            separation: 4.0,
            radius_ratio: 0.3,
            leaf_scale: 0.5,
            angle_jitter: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticWorld {
    pub tree: LabelTree,
    pub config: WorldConfig,
    pub seed: u64,
    pub labels: Vec<String>,
    pub paths: Vec<Vec<usize>>,
    pub specs: Vec<GaussianConditionSpec>,
    /// Pairwise 2-Wasserstein distances between leaves.
    pub ground_truth: Vec<Vec<f64>>,
}

/// Orthonormal pair spanning a random 2-plane of `R^dim`.
fn random_plane(r: &mut rng::SimRng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let u = rng::standard_normal(r, dim);
        let v = rng::standard_normal(r, dim);
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nu < 1e-8 {
            continue;
        }
        let u: Vec<f64> = u.iter().map(|a| a / nu).collect();
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = v.iter().zip(&u).map(|(b, a)| b - dot * a).collect();
        let nw = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nw < 1e-8 {
            continue;
        }
        return (u, w.iter().map(|a| a / nw).collect());
    }
}

fn place(
    tree: &LabelTree,
    center: Vec<f64>,
    radius: f64,
    cfg: &WorldConfig,
    r: &mut rng::SimRng,
    out: &mut Vec<Vec<f64>>,
) {
    let children = match tree {
        LabelTree::Leaf(_) => {
            out.push(center);
            return;
        }
        LabelTree::Node(cs) => cs,
    };
    let n = children.len();
    let offsets: Vec<Vec<f64>> = if n == 1 {
        vec![vec![0.0; cfg.dim]]
    } else if cfg.dim == 1 {
        (0..n)
            .map(|i| vec![radius * (2.0 * i as f64 / (n - 1) as f64 - 1.0)])
            .collect()
    } else {
        let (u, v) = random_plane(r, cfg.dim);
        let phase = r.random_range(0.0..TAU);
        let jitter = if n >= 3 { cfg.angle_jitter } else { 0.0 };
        (0..n)
            .map(|i| {
                let du: f64 = r.random_range(-0.5..0.5);
                let a = phase + TAU * (i as f64 + jitter * du) / n as f64;
                u.iter().zip(&v).map(|(p, q)| radius * (a.cos() * p + a.sin() * q)).collect()
            })
            .collect()
    };
    for (c, off) in children.iter().zip(offsets) {
        let pos: Vec<f64> = center.iter().zip(&off).map(|(a, b)| a + b).collect();
        place(c, pos, radius * cfg.radius_ratio, cfg, r, out);
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Embed `tree_spec` as a Gaussian world. Deterministic given `seed`.
pub fn gen_semantic_world(tree_spec: &str, config: WorldConfig, seed: u64) -> Result<SemanticWorld> {
    if config.dim == 0 {
        return Err(Error::invalid("world dimension must be positive"));
    }
    if !(config.separation > 0.0 && config.separation.is_finite()) {
        return Err(Error::invalid("separation must be positive"));
    }
    if !(config.radius_ratio > 0.0 && config.radius_ratio < 0.5) {
        return Err(Error::invalid("radius ratio must lie in (0, 0.5)"));
    }
    if !(config.leaf_scale > 0.0 && config.leaf_scale.is_finite()) {
        return Err(Error::invalid("leaf scale must be positive"));
    }
    if !(0.0..1.0).contains(&config.angle_jitter) {
        return Err(Error::invalid("angle jitter must lie in [0, 1)"));
    }
    let tree = LabelTree::parse(tree_spec)?;
    let leaves = tree.leaves();
    if leaves.len() < 2 {
        return Err(Error::invalid("a world needs at least two leaves"));
    }
    let labels: Vec<String> = leaves.iter().map(|(l, _)| l.clone()).collect();
    // Rejects duplicate labels.
    Vocabulary::from_labels(&labels)?;

    let mut r = rng::rng_from_seed(seed);
    let mut means = Vec::with_capacity(leaves.len());
    place(&tree, vec![0.0; config.dim], config.separation / 2.0, &config, &mut r, &mut means);
    for i in 0..means.len() {
        for j in 0..i {
            if euclid(&means[i], &means[j]) < 1e-9 {
                return Err(Error::invalid(format!(
                    "leaves {} and {} coincide; single-child nodes stack their subtrees",
                    labels[j], labels[i]
                )));
            }
        }
    }
    let ground_truth = means
        .iter()
        .map(|a| means.iter().map(|b| euclid(a, b)).collect())
        .collect();
    let specs = means
        .into_iter()
        .map(|m| GaussianConditionSpec::new(m, config.leaf_scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(SemanticWorld {
        tree,
        config,
        seed,
        labels,
        paths: leaves.into_iter().map(|(_, p)| p).collect(),
        specs,
        ground_truth,
    })
}

/// `default8` or a path to a world JSON file.
pub fn resolve_world(name_or_path: &str, seed: u64) -> Result<SemanticWorld> {
    if name_or_path == "default8" {
        return gen_semantic_world(DEFAULT8, WorldConfig::default(), seed);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return SemanticWorld::load(path);
    }
    Err(Error::invalid(format!("unknown world {name_or_path:?}; use default8 or a world JSON path")))
}

impl SemanticWorld {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_labels(&self.labels).expect("labels validated at construction")
    }

    /// Exact-score model of the world.
    pub fn model(&self) -> AnalyticModel {
        AnalyticModel::gaussian(self.vocabulary(), self.specs.clone()).expect("specs validated at construction")
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("no leaf labelled {label:?}")))
    }

    /// Number of edges between two leaves.
    pub fn tree_distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.paths[i], &self.paths[j]);
        let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
        a.len() + b.len() - 2 * common
    }

    /// Index of the root child containing each leaf.
    pub fn top_level_groups(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.first().copied().unwrap_or(0)).collect()
    }

    /// Fraction of triplets `(i, j, l)` with `tree(i, j) < tree(i, l)` for
    /// which `d(i, j) < d(i, l)`. `None` when the tree induces no such triplet.
    pub fn triplet_agreement(&self, d: &[Vec<f64>]) -> Option<f64> {
        let n = self.len();
        let (mut agree, mut total) = (0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if i == j || i == l || j == l {
                        continue;
                    }
                    if self.tree_distance(i, j) < self.tree_distance(i, l) {
                        total += 1;
                        if d[i][j] < d[i][l] {
                            agree += 1;
                        }
                    }
                }
            }
        }
        (total > 0).then(|| agree as f64 / total as f64)
    }

    /// Upper triangle of the ground truth, matching
    /// [`super::SimilarityMatrix::upper_triangle`].
    pub fn ground_truth_upper(&self) -> Vec<f64> {
        super::matrix::upper_pairs(self.len())
            .into_iter()
            .map(|(i, j)| self.ground_truth[i][j])
            .collect()
    }

    /// `per_leaf` clean samples from every leaf, interleaved by leaf.
    pub fn sample_dataset(&self, per_leaf: usize, seed: u64) -> Vec<LabeledSample> {
        let vocab = self.vocabulary();
        let mut r = rng::rng_from_seed(seed);
        let mut out = Vec::with_capacity(per_leaf * self.len());
        for _ in 0..per_leaf {
            for (spec, y) in self.specs.iter().zip(vocab.entries()) {
                let z = rng::standard_normal(&mut r, spec.dim());
                let x = spec.mean.iter().zip(z).map(|(m, e)| m + spec.scale * e).collect();
                out.push(LabeledSample { x, y: y.clone() });
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let w: SemanticWorld = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n < 2 || self.specs.len() != n || self.paths.len() != n || self.ground_truth.len() != n {
            return Err(Error::invalid("world JSON has inconsistent sizes"));
        }
        Vocabulary::from_labels(&self.labels)?;
        let dim = self.specs[0].dim();
        for s in &self.specs {
            s.validate()?;
            if s.dim() != dim {
                return Err(Error::invalid("world leaves disagree on dimension"));
            }
        }
        for row in &self.ground_truth {
            if row.len() != n || row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid("world ground truth must be a finite nonnegative square matrix"));
            }
        }
        Ok(())
    }
}
