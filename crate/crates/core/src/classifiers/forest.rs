use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::{derive_seed, seeded, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Draw a bootstrap sample per tree; when off every tree sees all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: Some(16),
            bootstrap: true,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree with Gini impurity and midpoint thresholds; samples with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct Builder<'a> {
    rows: &'a [f64],
    dim: usize,
    labels: &'a [u8],
    max_depth: Option<usize>,
    max_features: usize,
    nodes: Vec<Node>,
}

fn gini(ones: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = ones as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

fn majority(ones: usize, n: usize) -> u8 {
    u8::from(2 * ones > n)
}

impl Builder<'_> {
    fn value(&self, i: usize, f: usize) -> f64 {
        self.rows[i * self.dim + f]
    }

    /// Best `(impurity, threshold)` on one feature, lowest threshold on ties.
    fn best_threshold(&self, samples: &[usize], f: usize) -> Option<(f64, f64)> {
        let mut sorted: Vec<(f64, u8)> = samples.iter().map(|&i| (self.value(i, f), self.labels[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let total_ones = sorted.iter().filter(|s| s.1 == 1).count();
        let mut left_ones = 0;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left_ones += usize::from(sorted[i].1);
            if sorted[i].0 == sorted[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            let imp = (nl as f64 * gini(left_ones, nl) + nr as f64 * gini(total_ones - left_ones, nr)) / n as f64;
            if best.is_none_or(|(b, _)| imp < b - 1e-12) {
                best = Some((imp, (sorted[i].0 + sorted[i + 1].0) / 2.0));
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let ones = samples.iter().filter(|&&i| self.labels[i] == 1).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(ones, samples.len())));
        if ones == 0 || ones == samples.len() || self.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let mut features: Vec<usize> = (0..self.dim).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (examined, &f) in features.iter().enumerate() {
            if examined >= self.max_features && best.is_some() {
                break;
            }
            if let Some((imp, t)) = self.best_threshold(&samples, f) {
                if best.is_none_or(|(b, _, _)| imp < b - 1e-12) {
                    best = Some((imp, f, t));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| self.value(i, feature) <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on the rows listed in `samples` (repeats allowed).
    /// Each split examines `max_features` randomly ordered features,
    /// continuing past that count only while no valid split has been found.
    pub fn fit(
        rows: &[f64],
        dim: usize,
        labels: &[u8],
        samples: Vec<usize>,
        max_depth: Option<usize>,
        max_features: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if samples.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("decision tree needs samples and features".into()));
        }
        let mut b = Builder {
            rows,
            dim,
            labels,
            max_depth,
            max_features: max_features.clamp(1, dim),
            nodes: Vec::new(),
        };
        b.grow(samples, 0, rng);
        Ok(DecisionTree { nodes: b.nodes })
    }

    /// Feature and threshold of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws its bootstrap sample and feature orders from
    /// `derive_seed(seed, t)`; `√D` features are examined per split.
    pub fn fit(rows: &[f64], dim: usize, labels: &[u8], config: &ForestConfig) -> Result<Self> {
        if config.n_trees == 0 {
            return Err(Error::InvalidArgument("random forest needs at least one tree".into()));
        }
        let n = labels.len();
        let max_features = ((dim as f64).sqrt().floor() as usize).max(1);
        let trees = (0..config.n_trees)
            .map(|t| {
                let mut rng = seeded(derive_seed(config.seed, t as u64));
                let samples = if config.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(rows, dim, labels, samples, config.max_depth, max_features, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(RandomForest { trees })
    }

    /// Majority vote; an even split goes to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.predict_row(row) == 1).count();
        majority(ones, self.trees.len())
    }
}
