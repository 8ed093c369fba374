//! Embedding-based similarity between a source complaint and a generated
//! candidate.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimilarityError {
    #[error("cannot score an empty string")]
    EmptyInput,
    #[error("encoder failure: {0}")]
    Encoder(String),
}

/// Produces one embedding per token of a text. Contextual encoders may
/// return different vectors for the same surface token in different
/// sentences.
pub trait TokenEmbedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed_tokens(&self, text: &str) -> Result<Vec<Vec<f64>>, SimilarityError>;

    /// Pooled sentence vector; mean of the token vectors by default.
    fn embed_sentence(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        let tokens = self.embed_tokens(text)?;
        mean_pool(&tokens).ok_or(SimilarityError::EmptyInput)
    }
}

pub fn mean_pool(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = vectors.first()?;
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Greedy max-cosine token matching; F1 of precision and recall.
    #[default]
    TokenGreedyF1,
    /// Cosine of pooled sentence embeddings.
    SentenceCosine,
}

impl std::str::FromStr for SimilarityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "token_greedy_f1" => Ok(Self::TokenGreedyF1),
            "sentence_cosine" => Ok(Self::SentenceCosine),
            other => Err(format!("unknown similarity mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityGateConfig {
    pub theta: f64,
    pub mode: SimilarityMode,
    pub embedding_backend: String,
}

impl Default for SimilarityGateConfig {
    fn default() -> Self {
        Self {
            theta: 0.97,
            mode: SimilarityMode::TokenGreedyF1,
            embedding_backend: HashedTokenEmbedder::ID.into(),
        }
    }
}

impl SimilarityGateConfig {
    pub fn validate(&self) -> Result<(), String> {
        if (0.0..=1.0).contains(&self.theta) {
            Ok(())
        } else {
            Err(format!("theta {} outside [0, 1]", self.theta))
        }
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy matching scores over precomputed token embeddings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision averages, over candidate tokens, the best cosine against any
/// source token; recall does the converse. F1 is their harmonic mean (0
/// when both are 0).
pub fn greedy_f1(
    source: &[Vec<f64>],
    candidate: &[Vec<f64>],
) -> Result<GreedyScores, SimilarityError> {
    if source.is_empty() || candidate.is_empty() {
        return Err(SimilarityError::EmptyInput);
    }
    let matrix: Vec<Vec<f64>> = candidate
        .iter()
        .map(|c| source.iter().map(|s| cosine(c, s)).collect())
        .collect();
    let precision = matrix
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..source.len())
        .map(|j| {
            matrix
                .iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / source.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(GreedyScores {
        precision,
        recall,
        f1,
    })
}

/// Similarity of `candidate` to `source` in `[0, 1]`.
pub fn similarity(
    source: &str,
    candidate: &str,
    mode: SimilarityMode,
    embedder: &dyn TokenEmbedder,
) -> Result<f64, SimilarityError> {
    if source.trim().is_empty() || candidate.trim().is_empty() {
        return Err(SimilarityError::EmptyInput);
    }
    let score = match mode {
        SimilarityMode::TokenGreedyF1 => {
            let s = embedder.embed_tokens(source)?;
            let c = embedder.embed_tokens(candidate)?;
            greedy_f1(&s, &c)?.f1
        }
        SimilarityMode::SentenceCosine => {
            let s = embedder.embed_sentence(source)?;
            let c = embedder.embed_sentence(candidate)?;
            cosine(&s, &c)
        }
    };
    Ok(score.clamp(0.0, 1.0))
}

/// Non-contextual fallback encoder: each lower-cased token is embedded as
/// a signed hash of its character trigrams (with boundary markers), so
/// inflected or misspelled variants stay close.
#[derive(Debug, Clone)]
pub struct HashedTokenEmbedder {
    dim: usize,
}

impl Default for HashedTokenEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl HashedTokenEmbedder {
    pub const ID: &'static str = "hashed-trigram-256";

    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }

    fn embed_token(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let chars: Vec<char> = format!("^{}$", token.to_lowercase()).chars().collect();
        for gram in chars.windows(3.min(chars.len())) {
            let s: String = gram.iter().collect();
            let digest = Sha256::digest(s.as_bytes());
            let idx =
                u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % self.dim;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        v
    }
}

impl TokenEmbedder for HashedTokenEmbedder {
    fn id(&self) -> &str {
        Self::ID
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<Vec<f64>>, SimilarityError> {
        let tokens: Vec<_> = text
            .split_whitespace()
            .map(|t| self.embed_token(t))
            .collect();
        if tokens.is_empty() {
            return Err(SimilarityError::EmptyInput);
        }
        Ok(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Looks up fixed vectors for single-letter tokens.
    struct StubEmbedder(Vec<(&'static str, Vec<f64>)>);

    impl TokenEmbedder for StubEmbedder {
        fn id(&self) -> &str {
            "stub"
        }

        fn embed_tokens(&self, text: &str) -> Result<Vec<Vec<f64>>, SimilarityError> {
            text.split_whitespace()
                .map(|t| {
                    self.0
                        .iter()
                        .find(|(k, _)| *k == t)
                        .map(|(_, v)| v.clone())
                        .ok_or_else(|| SimilarityError::Encoder(format!("no vector for {t}")))
                })
                .collect()
        }
    }

    fn stub() -> StubEmbedder {
        StubEmbedder(vec![("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0])])
    }

    #[test]
    fn orthogonal_tokens_score_zero() {
        let s = greedy_f1(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let sim = similarity("x", "y", SimilarityMode::TokenGreedyF1, &stub()).unwrap();
        assert_eq!(sim, 0.0);
    }

    #[test]
    fn partial_match() {
        let s = greedy_f1(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let sim = similarity("x y", "x", SimilarityMode::TokenGreedyF1, &stub()).unwrap();
        assert!((sim - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_encoder_errors() {
        let e = HashedTokenEmbedder::default();
        assert_eq!(
            similarity("", "x", SimilarityMode::TokenGreedyF1, &e),
            Err(SimilarityError::EmptyInput)
        );
        assert!(matches!(
            similarity("x", "q", SimilarityMode::TokenGreedyF1, &stub()),
            Err(SimilarityError::Encoder(_))
        ));
    }

    #[test]
    fn sentence_mode() {
        let sim = similarity("x y", "y x", SimilarityMode::SentenceCosine, &stub()).unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
        let sim = similarity("x", "y", SimilarityMode::SentenceCosine, &stub()).unwrap();
        assert_eq!(sim, 0.0);
    }

    #[test]
    fn theta_validation() {
        assert!(SimilarityGateConfig::default().validate().is_ok());
        let bad = SimilarityGateConfig {
            theta: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn self_similarity_is_one(text in "[a-z]{1,8}( [a-z]{1,8}){0,10}") {
            let e = HashedTokenEmbedder::default();
            for mode in [SimilarityMode::TokenGreedyF1, SimilarityMode::SentenceCosine] {
                let s = similarity(&text, &text, mode, &e).unwrap();
                prop_assert!((s - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn greedy_f1_is_symmetric(
            a in "[a-z]{1,6}( [a-z]{1,6}){0,6}",
            b in "[a-z]{1,6}( [a-z]{1,6}){0,6}",
        ) {
            let e = HashedTokenEmbedder::default();
            let ab = similarity(&a, &b, SimilarityMode::TokenGreedyF1, &e).unwrap();
            let ba = similarity(&b, &a, SimilarityMode::TokenGreedyF1, &e).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
