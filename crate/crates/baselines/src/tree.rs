//! Decision trees: weighted Gini classification trees (forest, boosting)
//! and second-order regression trees over binned features (gradient
//! boosting).

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; all when `None`.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

/// Classification tree; leaves hold normalized class distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    nodes: Vec<Node>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn distribution(&self, idx: &[usize]) -> Vec<f64> {
        let mut d = vec![0.0; self.n_classes];
        for &i in idx {
            d[self.y[i]] += self.w[i];
        }
        d
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let dist = self.distribution(&idx);
        let total: f64 = dist.iter().sum();
        let pure = dist.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_done || idx.len() < self.params.min_samples_split.max(2) {
            return self.leaf(dist, total);
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        if let Some(m) = self.params.max_features {
            features.shuffle(rng);
            features.truncate(m.clamp(1, d));
        }
        let parent = gini(&dist, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let min_leaf = self.params.min_samples_leaf.max(1);
        for &f in &features {
            let mut sorted = idx.clone();
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0.0; self.n_classes];
            let mut left_w = 0.0;
            for pos in 0..sorted.len() - 1 {
                let i = sorted[pos];
                left[self.y[i]] += self.w[i];
                left_w += self.w[i];
                let (v, next) = (self.x[i][f], self.x[sorted[pos + 1]][f]);
                if v == next || pos + 1 < min_leaf || sorted.len() - pos - 1 < min_leaf {
                    continue;
                }
                let right: Vec<f64> = dist.iter().zip(&left).map(|(t, l)| t - l).collect();
                let right_w = total - left_w;
                let impurity = (left_w * gini(&left, left_w) + right_w * gini(&right, right_w)) / total;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, (v + next) / 2.0));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(dist, total);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    fn leaf(&mut self, mut dist: Vec<f64>, total: f64) -> usize {
        if total > 0.0 {
            dist.iter_mut().for_each(|c| *c /= total);
        }
        self.nodes.push(Node::Leaf(dist));
        self.nodes.len() - 1
    }
}

impl ClassificationTree {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(!x.is_empty() && x.len() == y.len() && y.len() == weights.len());
        let mut b = Builder {
            x,
            y,
            w: weights,
            n_classes,
            params,
            nodes: Vec::new(),
        };
        let idx: Vec<usize> = (0..x.len()).filter(|&i| weights[i] > 0.0).collect();
        let root = b.build(idx, 0, rng);
        debug_assert_eq!(root, 0);
        Self { nodes: b.nodes }
    }

    pub fn predict_proba(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(d) => return d,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Quantile bin edges per feature; value `v` falls in the first bin whose
/// upper edge is `>= v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    edges: Vec<Vec<f64>>,
}

impl Binner {
    pub fn fit(x: &[Vec<f64>], max_bins: usize) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let edges = (0..d)
            .map(|f| {
                let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                if vals.len() <= max_bins {
                    // midpoints between distinct values
                    vals.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
                } else {
                    let mut e: Vec<f64> = (1..max_bins)
                        .map(|b| {
                            let i = b * vals.len() / max_bins;
                            (vals[i - 1] + vals[i]) / 2.0
                        })
                        .collect();
                    e.dedup();
                    e
                }
            })
            .collect();
        Self { edges }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn bin(&self, feature: usize, v: f64) -> usize {
        self.edges[feature].partition_point(|&e| e < v)
    }

    /// Upper edge of `bin`; the split threshold for "bin <= b".
    pub fn edge(&self, feature: usize, bin: usize) -> f64 {
        self.edges[feature][bin]
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<u16>> {
        x.iter()
            .map(|r| r.iter().enumerate().map(|(f, &v)| self.bin(f, v) as u16).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub gamma: f64,
}

/// Regression tree fit to gradient statistics; leaves hold raw weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn fit(binned: &[Vec<u16>], binner: &Binner, grad: &[f64], hess: &[f64], params: &BoostParams) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        let idx: Vec<usize> = (0..binned.len()).collect();
        tree.build(binned, binner, grad, hess, params, idx, 0);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        binned: &[Vec<u16>],
        binner: &Binner,
        grad: &[f64],
        hess: &[f64],
        p: &BoostParams,
        idx: Vec<usize>,
        depth: usize,
    ) -> usize {
        let g: f64 = idx.iter().map(|&i| grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| hess[i]).sum();
        let leaf_value = -g / (h + p.lambda);
        let score = |g: f64, h: f64| g * g / (h + p.lambda);
        let mut best: Option<(f64, usize, usize)> = None;
        if depth < p.max_depth && idx.len() >= 2 {
            let d = binned[0].len();
            for f in 0..d {
                let nb = binner.n_bins(f);
                if nb < 2 {
                    continue;
                }
                let mut hg = vec![0.0; nb];
                let mut hh = vec![0.0; nb];
                for &i in &idx {
                    let b = binned[i][f] as usize;
                    hg[b] += grad[i];
                    hh[b] += hess[i];
                }
                let (mut gl, mut hl) = (0.0, 0.0);
                for b in 0..nb - 1 {
                    gl += hg[b];
                    hl += hh[b];
                    let (gr, hr) = (g - gl, h - hl);
                    if hl < p.min_child_weight || hr < p.min_child_weight {
                        continue;
                    }
                    let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g, h)) - p.gamma;
                    if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                        best = Some((gain, f, b));
                    }
                }
            }
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(vec![leaf_value]));
        if let Some((_, feature, bin)) = best {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| binned[i][feature] as usize <= bin);
            let left = self.build(binned, binner, grad, hess, p, l, depth + 1);
            let right = self.build(binned, binner, grad, hess, p, r, depth + 1);
            self.nodes[slot] = Node::Split {
                feature,
                threshold: binner.edge(feature, bin),
                left,
                right,
            };
        }
        slot
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return v[0],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}
