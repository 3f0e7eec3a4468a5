use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree grown by greedy variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Tree {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
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
                    };
                }
            }
        }
    }

    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        rows: &[usize],
        p: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut t = Tree { nodes: Vec::new() };
        let mut rows = rows.to_vec();
        t.grow(x, y, &mut rows, 0, p, rng);
        t
    }

    fn grow<R: Rng>(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        rows: &mut [usize],
        depth: usize,
        p: &TreeParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if depth >= p.max_depth || rows.len() < 2 * p.min_samples_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, y, rows, p, rng) else {
            return id;
        };
        // stable partition keeps results independent of sort internals
        let (mut l, mut r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| x[i][feature] <= threshold);
        let left = self.grow(x, y, &mut l, depth + 1, p, rng);
        let right = self.grow(x, y, &mut r, depth + 1, p, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn best_split<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    p: &TreeParams,
    rng: &mut R,
) -> Option<(usize, f64)> {
    let d = x[rows[0]].len();
    let mut feats: Vec<usize> = (0..d).collect();
    if let Some(m) = p.max_features {
        if m < d {
            feats.shuffle(rng);
            feats.truncate(m.max(1));
            feats.sort_unstable();
        }
    }
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let leaf = p.min_samples_leaf.max(1);
    let base = total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = rows.to_vec();
    for f in feats {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut sum_l = 0.0;
        for k in 0..n - 1 {
            sum_l += y[order[k]];
            let nl = k + 1;
            let (xa, xb) = (x[order[k]][f], x[order[k + 1]][f]);
            if nl < leaf || n - nl < leaf || xa == xb {
                continue;
            }
            let sum_r = total - sum_l;
            let score = sum_l * sum_l / nl as f64 + sum_r * sum_r / (n - nl) as f64;
            if score > base + 1e-12 && best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, f, xa + (xb - xa) / 2.0));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        n_trees: usize,
        p: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let n = x.len();
        let trees = (0..n_trees)
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                Tree::fit(x, y, &rows, p, rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_one(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Gradient boosting with squared loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Boosted {
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        n_estimators: usize,
        learning_rate: f64,
        p: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let init = y.iter().sum::<f64>() / y.len() as f64;
        let mut pred = vec![init; y.len()];
        let rows: Vec<usize> = (0..y.len()).collect();
        let mut trees = Vec::with_capacity(n_estimators);
        for _ in 0..n_estimators {
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            let t = Tree::fit(x, &resid, &rows, p, rng);
            for (pi, xi) in pred.iter_mut().zip(x) {
                *pi += learning_rate * t.predict_one(xi);
            }
            trees.push(t);
        }
        Self {
            init,
            learning_rate,
            trees,
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_one(x)).sum::<f64>()
    }
}
