//! Random forests for regression and classification.
//!
//! Trees are grown on bootstrap samples with a random subset of candidate
//! features at every split. Regression splits minimize the summed squared
//! error of the children, classification splits minimize the weighted Gini
//! impurity. Thresholds sit at midpoints between consecutive distinct feature
//! values; equal-impurity candidates resolve to the lowest feature index and
//! then the lowest threshold. Training is deterministic in the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` uses `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn regression_default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }

    pub fn classification_default() -> Self {
        Self {
            min_leaf: 5,
            ..Self::regression_default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn mtry(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter("min_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classification {
        labels: Vec<usize>,
        n_classes: usize,
    },
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Mean target (regression) or class frequencies (classification).
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub task: Task,
    pub n_features: usize,
    pub config: TrainConfig,
}

/// Mean that is exact when all values are equal.
fn stable_mean<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else { return 0.0 };
    let mut n = 1usize;
    let mut acc = 0.0;
    for v in it {
        acc += v - first;
        n += 1;
    }
    first + acc / n as f64
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    targets: &'a Targets,
    config: &'a TrainConfig,
    mtry: usize,
    n_features: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        self.impurity < other.impurity
            || (self.impurity == other.impurity
                && (self.feature, self.threshold) < (other.feature, other.threshold))
    }
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> Vec<f64> {
        match self.targets {
            Targets::Regression(y) => vec![stable_mean(idx.iter().map(|&i| y[i]))],
            Targets::Classification { labels, n_classes } => {
                let mut counts = vec![0.0; *n_classes];
                for &i in idx {
                    counts[labels[i]] += 1.0;
                }
                let n = idx.len() as f64;
                counts.iter_mut().for_each(|c| *c /= n);
                counts
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self.targets {
            Targets::Regression(y) => idx.iter().all(|&i| y[i] == y[idx[0]]),
            Targets::Classification { labels, .. } => {
                idx.iter().all(|&i| labels[i] == labels[idx[0]])
            }
        }
    }

    /// Best split of `idx` on one feature, honouring `min_leaf`.
    fn best_on_feature(&self, idx: &[usize], feature: usize) -> Option<Candidate> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let n = order.len();
        let min_leaf = self.config.min_leaf;
        let mut best: Option<Candidate> = None;

        let mut consider = |k: usize, impurity: f64| {
            // Split between order[k-1] and order[k].
            let lo = self.x[order[k - 1]][feature];
            let hi = self.x[order[k]][feature];
            if lo == hi || k < min_leaf || n - k < min_leaf {
                return;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            let cand = Candidate {
                impurity,
                feature,
                threshold,
            };
            if best.is_none_or(|b| cand.better_than(&b)) {
                best = Some(cand);
            }
        };

        match self.targets {
            Targets::Regression(y) => {
                let (mut sum_r, mut sq_r) = (0.0, 0.0);
                for &i in &order {
                    sum_r += y[i];
                    sq_r += y[i] * y[i];
                }
                let (mut sum_l, mut sq_l) = (0.0, 0.0);
                for k in 1..n {
                    let v = y[order[k - 1]];
                    sum_l += v;
                    sq_l += v * v;
                    let sl = k as f64;
                    let sr = (n - k) as f64;
                    let (s_r, q_r) = (sum_r - sum_l, sq_r - sq_l);
                    let sse = (sq_l - sum_l * sum_l / sl) + (q_r - s_r * s_r / sr);
                    consider(k, sse);
                }
            }
            Targets::Classification { labels, n_classes } => {
                let mut right = vec![0usize; *n_classes];
                for &i in &order {
                    right[labels[i]] += 1;
                }
                let mut left = vec![0usize; *n_classes];
                for k in 1..n {
                    let c = labels[order[k - 1]];
                    left[c] += 1;
                    right[c] -= 1;
                    let gini = |counts: &[usize], m: usize| {
                        let m = m as f64;
                        m - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / m
                    };
                    // n_l * G_l + n_r * G_r
                    consider(k, gini(&left, k) + gini(&right, n - k));
                }
            }
        }
        best
    }

    fn grow(
        &self,
        idx: Vec<usize>,
        depth: usize,
        rng: &mut ChaCha8Rng,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { value: Vec::new() });

        let can_split = idx.len() >= 2 * self.config.min_leaf
            && self.config.max_depth.is_none_or(|d| depth < d)
            && !self.is_pure(&idx);

        let mut split = None;
        if can_split {
            let mut features: Vec<usize> = (0..self.n_features).collect();
            features.shuffle(rng);
            // Draw `mtry` features; if none of them splits, keep drawing.
            let mut best: Option<Candidate> = None;
            for (k, &f) in features.iter().enumerate() {
                if k >= self.mtry && best.is_some() {
                    break;
                }
                if let Some(c) = self.best_on_feature(&idx, f) {
                    if best.is_none_or(|b| c.better_than(&b)) {
                        best = Some(c);
                    }
                }
            }
            split = best;
        }

        match split {
            None => {
                nodes[id] = Node::Leaf {
                    value: self.leaf_value(&idx),
                }
            }
            Some(c) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| self.x[i][c.feature] <= c.threshold);
                let left = self.grow(l, depth + 1, rng, nodes);
                let right = self.grow(r, depth + 1, rng, nodes);
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    // splitmix64 step
    let mut z = seed.wrapping_add((tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Forest {
    pub fn train(x: &[Vec<f64>], targets: &Targets, config: &TrainConfig) -> Result<Forest> {
        config.validate()?;
        if x.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: targets.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 training rows, got {}",
                x.len()
            )));
        }
        let n_features = x[0].len();
        if let Some(row) = x.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: row.len(),
            });
        }
        let task = match targets {
            Targets::Regression(y) => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "non-finite regression target".into(),
                    ));
                }
                Task::Regression
            }
            Targets::Classification { labels, n_classes } => {
                if let Some(&l) = labels.iter().find(|&&l| l >= *n_classes) {
                    return Err(Error::InvalidParameter(format!(
                        "label {l} out of range for {n_classes} classes"
                    )));
                }
                Task::Classification {
                    n_classes: *n_classes,
                }
            }
        };
        let builder = Builder {
            x,
            targets,
            config,
            mtry: config.mtry(n_features),
            n_features,
        };
        let n = x.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.seed, t));
                let idx: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut nodes = Vec::new();
                builder.grow(idx, 0, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Ok(Forest {
            trees,
            task,
            n_features,
            config: config.clone(),
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Mean of per-tree leaf means.
    pub fn predict_regression(&self, x: &[f64]) -> Result<f64> {
        if self.task != Task::Regression {
            return Err(Error::InvalidParameter("forest is not a regressor".into()));
        }
        self.check_dim(x)?;
        Ok(stable_mean(self.trees.iter().map(|t| t.leaf(x)[0])))
    }

    /// Regression output clamped to `[0, 1]`, for quality targets.
    pub fn predict_quality(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_regression(x)?.clamp(0.0, 1.0))
    }

    /// Average of per-tree leaf class frequencies.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let Task::Classification { n_classes } = self.task else {
            return Err(Error::InvalidParameter("forest is not a classifier".into()));
        };
        self.check_dim(x)?;
        let mut acc = vec![0.0; n_classes];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.leaf(x)) {
                *a += v;
            }
        }
        let total: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|a| *a /= total);
        Ok(acc)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        Ok(p.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap())
    }
}
