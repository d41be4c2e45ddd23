use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub min_split_gain: f64,
    pub min_child_weight: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            l2_reg: 1.0,
            min_split_gain: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning_rate {} not in (0, 1]", self.learning_rate)));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.l2_reg >= 0.0) {
            return Err(Error::Config(format!("l2_reg {} is negative", self.l2_reg)));
        }
        if !(self.min_split_gain >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::Config("min_split_gain and min_child_weight must be non-negative".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample {} not in (0, 1]", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Flat node array; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

pub const MODEL_FORMAT: &str = "gliomapipe-gbt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format: String,
    pub version: u32,
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Model truncated to its first `k` trees.
    pub fn truncated(&self, k: usize) -> Self {
        let mut m = self.clone();
        m.trees.truncate(k);
        m
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Format(format!("model: {e}")))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model {} v{}", m.format, m.version)));
        }
        for t in &m.trees {
            for n in &t.nodes {
                if let Node::Split { feature, left, right, .. } = *n {
                    if feature >= m.n_features() || left >= t.nodes.len() || right >= t.nodes.len() {
                        return Err(Error::Format("model tree references out of range".into()));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn check_row(i: usize, r: &[f64], n_features: usize) -> Result<()> {
    if r.len() != n_features {
        return Err(Error::Shape(format!("row {i} has {} values, expected {n_features}", r.len())));
    }
    if let Some(j) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("row {i} feature {j} is {}", r[j])));
    }
    Ok(())
}

/// Sum in a canonical order so the result does not depend on row order.
fn canonical_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    grad: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf_weight(&self, idx: &[usize]) -> f64 {
        let g = canonical_sum(idx.iter().map(|&i| self.grad[i]));
        -g / (idx.len() as f64 + self.params.l2_reg)
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let lambda = self.params.l2_reg;
        let mcw = self.params.min_child_weight;
        let n_features = self.rows[0].len();
        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        for f in 0..n_features {
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.rows[i][f], self.grad[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let total: f64 = sorted.iter().map(|p| p.1).sum();
            let h_total = sorted.len() as f64;
            let parent = total * total / (h_total + lambda);
            let mut gl = 0.0;
            for k in 0..sorted.len() - 1 {
                gl += sorted[k].1;
                let (a, b) = (sorted[k].0, sorted[k + 1].0);
                if a == b {
                    continue;
                }
                let hl = (k + 1) as f64;
                let hr = h_total - hl;
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gr = total - gl;
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent) - self.params.min_split_gain;
                if !(gain > 0.0) {
                    continue;
                }
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { weight: 0.0 });
        let split = if depth < self.params.max_depth && idx.len() >= 2 {
            self.best_split(&idx)
        } else {
            None
        };
        match split {
            None => self.nodes[slot] = Node::Leaf {
                weight: self.leaf_weight(&idx),
            },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][s.feature] <= s.threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[slot] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        slot
    }
}

/// Squared-error boosting: each tree fits gradients `pred − y` with unit
/// hessians using exact greedy splits.
pub fn train_gbt(rows: &[Vec<f64>], targets: &[f64], feature_names: &[String], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!("{} training rows, need at least 2", rows.len())));
    }
    if rows.len() != targets.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", rows.len(), targets.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        check_row(i, r, feature_names.len())?;
    }
    if let Some(t) = targets.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::InvalidData(format!("target {t}")));
    }
    let n = rows.len();
    let base_score = canonical_sum(targets.iter().copied()) / n as f64;
    let mut pred = vec![base_score; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let grad: Vec<f64> = pred.iter().zip(targets).map(|(p, y)| p - y).collect();
        let idx: Vec<usize> = if take == n {
            (0..n).collect()
        } else {
            let mut s = sample(&mut rng, n, take).into_vec();
            s.sort_unstable();
            s
        };
        let mut b = Builder {
            rows,
            grad: &grad,
            params,
            nodes: Vec::new(),
        };
        b.grow(idx, 0);
        let tree = Tree { nodes: b.nodes };
        for (p, r) in pred.iter_mut().zip(rows) {
            *p += params.learning_rate * tree.leaf_value(r);
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        base_score,
        learning_rate: params.learning_rate,
        feature_names: feature_names.to_vec(),
        trees,
    })
}

pub fn predict_gbt(model: &GbtModel, row: &[f64]) -> Result<f64> {
    check_row(0, row, model.n_features())?;
    Ok(model.trees.iter().fold(model.base_score, |acc, t| acc + model.learning_rate * t.leaf_value(row)))
}

pub fn predict_many(model: &GbtModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter().map(|r| predict_gbt(model, r)).collect()
}
