//! Random forest of CART trees (Gini impurity, random feature candidates).

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Candidate features per split; `√d` when `None`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// `(feature, threshold)` of the root, `None` for a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
}

impl RandomForest {
    /// Majority vote; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        majority(&votes)
    }

    pub fn predict_all(&self, x: &FeatureMatrix) -> Vec<usize> {
        (0..x.n_samples()).map(|i| self.predict(x.row(i))).collect()
    }
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

pub fn train_rfc(x: &FeatureMatrix, cfg: &ForestConfig, seed: u64) -> Result<RandomForest> {
    if x.n_samples() == 0 {
        return Err(Error::EmptyData);
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let n_classes = x.n_classes();
    let d = x.n_features();
    let m = cfg
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().round() as usize)
        .clamp(1, d.max(1));
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::FOREST, t as u64]);
            let n = x.n_samples();
            let idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x,
                n_classes,
                m,
                cfg,
                r,
                nodes: Vec::new(),
            };
            b.grow(idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(RandomForest { trees, n_classes })
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    n_classes: usize,
    m: usize,
    cfg: &'a ForestConfig,
    r: Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.x.labels()[i]] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&idx);
        self.nodes.push(Node::Leaf(majority(&counts)));
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || too_deep || idx.len() < 2 * self.cfg.min_samples_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x.row(i)[feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Lowest weighted Gini over `m` random candidate features; if none of
    /// them varies, the remaining features are tried in random order.
    fn best_split(&mut self, idx: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let d = self.x.n_features();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.r);
        let mut best: Option<(f64, usize, f64)> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= self.m && best.is_some() {
                break;
            }
            if let Some((score, thr)) = self.split_on(idx, counts, f) {
                if best.is_none_or(|(b, _, _)| score < b) {
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn split_on(&self, idx: &[usize], counts: &[usize], f: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, usize)> = idx
            .iter()
            .map(|&i| (self.x.row(i)[f], self.x.labels()[i]))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let leaf = self.cfg.min_samples_leaf;
        let mut left = vec![0usize; self.n_classes];
        let mut right = counts.to_vec();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let (v, c) = vals[i];
            left[c] += 1;
            right[c] -= 1;
            let nl = i + 1;
            if vals[i + 1].0 == v || nl < leaf || n - nl < leaf {
                continue;
            }
            let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, (v + vals[i + 1].0) / 2.0));
            }
        }
        best
    }
}
