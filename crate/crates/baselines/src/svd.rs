//! Randomized truncated SVD for sparse document-term matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tfidf::SparseRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSvd {
    n_features: usize,
    /// Component vectors, one per output dimension, each `n_features` long.
    components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

/// `X * M` for sparse `X` (n x v) and dense `M` (v x l).
fn sparse_mul(rows: &[SparseRow], m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (r, row) in rows.iter().enumerate() {
        for &(c, x) in row {
            for j in 0..m.ncols() {
                out[(r, j)] += x * m[(c, j)];
            }
        }
    }
    out
}

/// `X^T * M` for sparse `X` (n x v) and dense `M` (n x l).
fn sparse_t_mul(rows: &[SparseRow], n_features: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n_features, m.ncols());
    for (r, row) in rows.iter().enumerate() {
        for &(c, x) in row {
            for j in 0..m.ncols() {
                out[(c, j)] += x * m[(r, j)];
            }
        }
    }
    out
}

fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

impl TruncatedSvd {
    /// Fit `k` components with `n_iter` power iterations and a fixed
    /// oversampling of 10. Yields fewer than `k` components if the matrix
    /// has fewer rows.
    pub fn fit(rows: &[SparseRow], n_features: usize, k: usize, n_iter: usize, seed: u64) -> Self {
        let l = (k + 10).min(n_features).min(rows.len().max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = DMatrix::from_fn(n_features, l, |_, _| rng.gen_range(-1.0..1.0));
        let mut q = orthonormal(sparse_mul(rows, &omega));
        for _ in 0..n_iter {
            let z = orthonormal(sparse_t_mul(rows, n_features, &q));
            q = orthonormal(sparse_mul(rows, &z));
        }
        // B = Q^T X, held transposed as X^T Q (v x l)
        let bt = sparse_t_mul(rows, n_features, &q);
        let gram = bt.transpose() * &bt;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Vec::new();
        let mut singular_values = Vec::new();
        for &i in order.iter().take(k) {
            let sigma = eig.eigenvalues[i].max(0.0).sqrt();
            if sigma <= 1e-12 {
                break;
            }
            let u = eig.eigenvectors.column(i);
            let mut v: Vec<f64> = (&bt * u).iter().map(|x| x / sigma).collect();
            // deterministic sign: largest-magnitude entry positive
            let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            singular_values.push(sigma);
        }
        Self {
            n_features,
            components,
            singular_values,
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn transform(&self, row: &SparseRow) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| row.iter().map(|&(i, x)| x * c[i]).sum())
            .collect()
    }
}
