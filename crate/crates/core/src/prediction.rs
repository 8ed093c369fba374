//! Model-independent prediction contract shared by transformer and
//! classical classifiers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::labels::CategoryLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub label: CategoryLabel,
    pub scores: BTreeMap<CategoryLabel, f64>,
    pub model_fingerprint: String,
    /// Degenerate-input markers such as `out_of_vocabulary`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("empty text")]
    EmptyText,
    #[error("encoding failed: {0}")]
    Encoding(String),
    #[error("inference failed: {0}")]
    Backend(String),
}

impl PredictionResult {
    /// Build from probabilities aligned with `label_order`. The label is the
    /// argmax; ties go to the earliest position.
    pub fn from_probabilities(
        label_order: &[CategoryLabel],
        probabilities: &[f64],
        model_fingerprint: impl Into<String>,
    ) -> Self {
        assert_eq!(
            label_order.len(),
            probabilities.len(),
            "score vector length"
        );
        let mut best = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[best] {
                best = i;
            }
        }
        Self {
            label: label_order[best],
            scores: label_order
                .iter()
                .copied()
                .zip(probabilities.iter().copied())
                .collect(),
            model_fingerprint: model_fingerprint.into(),
            flags: Vec::new(),
        }
    }

    pub fn score_sum(&self) -> f64 {
        self.scores.values().sum()
    }
}

/// Numerically stable softmax in f64.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Anything that maps a complaint text to a category distribution.
pub trait TextClassifier: Send + Sync {
    /// Short model kind, e.g. `transformer` or `gradient_boosted_trees`.
    fn kind(&self) -> &str;

    fn fingerprint(&self) -> &str;

    fn label_order(&self) -> &[CategoryLabel];

    fn predict(&self, text: &str) -> Result<PredictionResult, PredictError>;

    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<PredictionResult>, PredictError> {
        texts.iter().map(|t| self.predict(t)).collect()
    }
}
