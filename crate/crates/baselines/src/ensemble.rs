//! Classifiers over dense reduced features. All work on compact class
//! indices `0..n_classes` and return a probability vector of that length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tree::{Binner, BoostParams, ClassificationTree, RegressionTree, TreeParams};

fn normalize(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|x| *x /= s);
    }
    p
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    normalize(z.iter().map(|v| (v - m).exp()).collect())
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<ClassificationTree>,
    n_classes: usize,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_estimators: usize, max_depth: Option<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = x[0].len();
        let params = TreeParams {
            max_depth,
            max_features: Some(((d as f64).sqrt().round() as usize).max(1)),
            ..Default::default()
        };
        let n = x.len();
        let trees = (0..n_estimators.max(1))
            .map(|_| {
                // bootstrap sample expressed as per-row multiplicities
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.gen_range(0..n)] += 1.0;
                }
                ClassificationTree::fit(x, y, &w, n_classes, &params, &mut rng)
            })
            .collect();
        Self { trees, n_classes }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.predict_proba(row)) {
                *a += p;
            }
        }
        normalize(acc)
    }
}

/// Multi-class AdaBoost with the SAMME update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    stages: Vec<(f64, ClassificationTree)>,
    n_classes: usize,
}

impl AdaBoost {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        n_estimators: usize,
        learning_rate: f64,
        max_depth: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = x.len();
        let k = n_classes.max(2) as f64;
        let params = TreeParams {
            max_depth: Some(max_depth.max(1)),
            ..Default::default()
        };
        let mut w = vec![1.0 / n as f64; n];
        let mut stages = Vec::new();
        for _ in 0..n_estimators.max(1) {
            let tree = ClassificationTree::fit(x, y, &w, n_classes, &params, &mut rng);
            let miss: Vec<bool> = x.iter().zip(y).map(|(r, &t)| argmax(tree.predict_proba(r)) != t).collect();
            let total: f64 = w.iter().sum();
            let err = w.iter().zip(&miss).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() / total;
            if err <= 0.0 {
                stages.push((1.0, tree));
                break;
            }
            if err >= 1.0 - 1.0 / k {
                if stages.is_empty() {
                    stages.push((1.0, tree));
                }
                break;
            }
            let alpha = learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
            for (wi, &m) in w.iter_mut().zip(&miss) {
                if m {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            stages.push((alpha, tree));
        }
        Self { stages, n_classes }
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut decision = vec![0.0; self.n_classes];
        let mut norm = 0.0;
        for (alpha, tree) in &self.stages {
            decision[argmax(tree.predict_proba(row))] += alpha;
            norm += alpha;
        }
        let k = self.n_classes.max(2) as f64;
        let scaled: Vec<f64> = decision.iter().map(|d| d / norm / (k - 1.0)).collect();
        softmax(&scaled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.3,
            max_depth: 6,
            lambda: 1.0,
            min_child_weight: 1.0,
            max_bins: 256,
        }
    }
}

/// Softmax gradient boosting: one regression tree per class per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    rounds: Vec<Vec<RegressionTree>>,
    learning_rate: f64,
    n_classes: usize,
}

impl GradientBoosting {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &GbtParams) -> Self {
        let binner = Binner::fit(x, params.max_bins.clamp(2, u16::MAX as usize));
        let binned = binner.transform(x);
        let n = x.len();
        let boost = BoostParams {
            max_depth: params.max_depth,
            lambda: params.lambda,
            min_child_weight: params.min_child_weight,
            gamma: 0.0,
        };
        let mut margin = vec![vec![0.0; n_classes]; n];
        let mut rounds = Vec::with_capacity(params.n_estimators);
        for _ in 0..params.n_estimators {
            let probs: Vec<Vec<f64>> = margin.iter().map(|m| softmax(m)).collect();
            let mut trees = Vec::with_capacity(n_classes);
            for k in 0..n_classes {
                let grad: Vec<f64> = (0..n).map(|i| probs[i][k] - f64::from(u8::from(y[i] == k))).collect();
                let hess: Vec<f64> = (0..n).map(|i| (2.0 * probs[i][k] * (1.0 - probs[i][k])).max(1e-16)).collect();
                let tree = RegressionTree::fit(&binned, &binner, &grad, &hess, &boost);
                for (i, row) in x.iter().enumerate() {
                    margin[i][k] += params.learning_rate * tree.predict(row);
                }
                trees.push(tree);
            }
            rounds.push(trees);
        }
        Self {
            rounds,
            learning_rate: params.learning_rate,
            n_classes,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut margin = vec![0.0; self.n_classes];
        for trees in &self.rounds {
            for (m, t) in margin.iter_mut().zip(trees) {
                *m += self.learning_rate * t.predict(row);
            }
        }
        softmax(&margin)
    }
}

/// Euclidean k-nearest neighbours; scores are neighbour vote fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    k: usize,
    n_classes: usize,
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, k: usize) -> Self {
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            k: k.clamp(1, x.len()),
            n_classes,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        // ties in distance resolve to the earlier training row
        dist.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0.0; self.n_classes];
        for &(_, i) in &dist[..self.k] {
            votes[self.y[i]] += 1.0;
        }
        votes.iter_mut().for_each(|v| *v /= self.k as f64);
        votes
    }
}
