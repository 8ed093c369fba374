//! Label-free word-embedding initialization from corpus co-occurrence.
//!
//! Each token's vector is a random projection of its positive pointwise
//! mutual information row, computed over whole documents. Tokens that
//! share contexts end up with similar vectors, which gives a randomly
//! initialized encoder the kind of lexical structure a published
//! checkpoint starts from.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EmbeddingInit {
    #[default]
    Random,
    /// Rows have norm `scale * initializer_range * sqrt(hidden)`, i.e.
    /// `scale` times the expected norm of a random row.
    Cooccurrence { scale: f64 },
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Word-embedding matrix (`vocab * hidden`, row-major) for documents given
/// as token-id sequences. Ids in `skip` (special tokens) are ignored as
/// contexts. Rows of tokens without any context are left as `None` so the
/// caller keeps their random initialization.
pub fn cooccurrence_embeddings(
    docs: &[Vec<u32>],
    vocab: usize,
    hidden: usize,
    skip: &[u32],
    row_norm: f64,
    seed: u64,
) -> Vec<Option<Vec<f32>>> {
    let mut pair: HashMap<(u32, u32), f64> = HashMap::new();
    for doc in docs {
        let mut ids: Vec<u32> = doc
            .iter()
            .copied()
            .filter(|i| !skip.contains(i) && (*i as usize) < vocab)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                *pair.entry((a, b)).or_default() += 1.0;
            }
        }
    }
    let mut marginal = vec![0.0f64; vocab];
    for (&(a, b), &c) in &pair {
        marginal[a as usize] += c;
        marginal[b as usize] += c;
    }
    let total: f64 = marginal.iter().sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection: Vec<f32> = (0..vocab * hidden)
        .map(|_| normal(&mut rng) as f32)
        .collect();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab];
    let mut add = |a: u32, b: u32, w: f64| {
        let row = rows[a as usize].get_or_insert_with(|| vec![0.0; hidden]);
        let p = &projection[b as usize * hidden..(b as usize + 1) * hidden];
        for (r, &x) in row.iter_mut().zip(p) {
            *r += w * x as f64;
        }
    };
    let mut entries: Vec<_> = pair.into_iter().collect();
    entries.sort_by_key(|&(k, _)| k);
    for ((a, b), c) in entries {
        let pmi = (c * total / (marginal[a as usize] * marginal[b as usize])).ln();
        if pmi > 0.0 {
            add(a, b, pmi);
            add(b, a, pmi);
        }
    }
    rows.into_iter()
        .map(|row| {
            let row = row?;
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.0).then(|| row.iter().map(|x| (x / norm * row_norm) as f32).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| (x * y) as f64).sum();
        let n = |v: &[f32]| v.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
        dot / (n(a) * n(b))
    }

    #[test]
    fn shared_contexts_give_similar_rows() {
        // 1,2 always with 5; 3,4 always with 6; 7 everywhere
        let mut docs = Vec::new();
        for i in 0..20 {
            docs.push(vec![0, if i % 2 == 0 { 1 } else { 2 }, 5, 7]);
            docs.push(vec![0, if i % 2 == 0 { 3 } else { 4 }, 6, 7]);
        }
        let rows = cooccurrence_embeddings(&docs, 9, 64, &[0], 2.0, 3);
        let r = |i: usize| rows[i].clone().unwrap();
        assert!(cos(&r(1), &r(2)) > 0.9);
        assert!(cos(&r(1), &r(3)) < 0.3);
        let norm = r(1).iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
        assert!((norm - 2.0).abs() < 1e-5);
        assert!(rows[0].is_none() && rows[8].is_none());
        assert_eq!(rows, cooccurrence_embeddings(&docs, 9, 64, &[0], 2.0, 3));
    }
}
