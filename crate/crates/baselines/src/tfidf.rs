//! Sparse term-frequency / inverse-document-frequency features.

use std::collections::{BTreeMap, HashMap};

use crimeclass_core::anonymizer::normalize::tokenize;
use serde::{Deserialize, Serialize};

/// Sparse row: `(column, value)` pairs sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfConfig {
    /// Keep at most this many terms, ranked by corpus frequency.
    pub vocabulary_size: usize,
    pub ngram_range: (usize, usize),
    pub idf_smoothing: bool,
    /// Ignore terms seen in fewer documents than this.
    pub min_df: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            vocabulary_size: 50_000,
            ngram_range: (1, 1),
            idf_smoothing: true,
            min_df: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub config: TfidfConfig,
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
}

fn terms(text: &str, (lo, hi): (usize, usize)) -> Vec<String> {
    let tokens: Vec<String> = tokenize(text)
        .into_iter()
        .map(|t| if t.starts_with('<') { t.to_string() } else { t.to_lowercase() })
        .collect();
    let mut out = Vec::new();
    for n in lo.max(1)..=hi.max(lo.max(1)) {
        for w in tokens.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

impl TfidfVectorizer {
    pub fn fit(texts: &[&str], config: TfidfConfig) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut tf: HashMap<String, usize> = HashMap::new();
        for text in texts {
            let ts = terms(text, config.ngram_range);
            for t in &ts {
                *tf.entry(t.clone()).or_default() += 1;
            }
            let mut uniq = ts;
            uniq.sort();
            uniq.dedup();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = tf
            .into_iter()
            .filter(|(t, _)| df[t] >= config.min_df)
            .collect();
        // frequency descending, then alphabetical for a stable vocabulary
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(config.vocabulary_size);
        let mut kept: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
        kept.sort();
        let n = texts.len() as f64;
        let idf = kept
            .iter()
            .map(|t| {
                let d = df[t] as f64;
                if config.idf_smoothing {
                    ((1.0 + n) / (1.0 + d)).ln() + 1.0
                } else {
                    (n / d).ln() + 1.0
                }
            })
            .collect();
        let vocabulary = kept.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        Self {
            config,
            vocabulary,
            idf,
        }
    }

    pub fn vocabulary_len(&self) -> usize {
        self.idf.len()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.vocabulary.contains_key(term)
    }

    /// L2-normalized TF-IDF row; empty when no term is in the vocabulary.
    pub fn transform(&self, text: &str) -> SparseRow {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms(text, self.config.ngram_range) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut row: SparseRow = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idf_downweights_common_terms() {
        let v = TfidfVectorizer::fit(&["upi fraud hua", "upi hack hua", "upi otp"], TfidfConfig::default());
        assert_eq!(v.vocabulary_len(), 5);
        let row = v.transform("upi fraud");
        assert_eq!(row.len(), 2);
        let upi = row.iter().find(|(i, _)| *i == v.vocabulary["upi"]).unwrap().1;
        let fraud = row.iter().find(|(i, _)| *i == v.vocabulary["fraud"]).unwrap().1;
        assert!(fraud > upi);
        assert!((row.iter().map(|(_, x)| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_idf_matches_formula() {
        let v = TfidfVectorizer::fit(&["a b", "a"], TfidfConfig::default());
        // n = 2, df(b) = 1 -> ln(3/2) + 1
        assert!((v.idf[v.vocabulary["b"]] - (1.5f64.ln() + 1.0)).abs() < 1e-12);
        assert!((v.idf[v.vocabulary["a"]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_vocabulary_is_empty() {
        let v = TfidfVectorizer::fit(&["a b"], TfidfConfig::default());
        assert!(v.transform("zzz qqq").is_empty());
    }

    #[test]
    fn vocabulary_cap_and_bigrams() {
        let cfg = TfidfConfig {
            vocabulary_size: 2,
            ngram_range: (1, 2),
            ..Default::default()
        };
        let v = TfidfVectorizer::fit(&["x y", "x y", "z"], cfg);
        assert_eq!(v.vocabulary_len(), 2);
        // ties in frequency break alphabetically: "x" < "x y" < "y"
        assert!(v.contains("x") && v.contains("x y"));
        assert!(terms("A b c", (1, 2)).contains(&"a b".to_string()));
    }

    #[test]
    fn placeholders_are_terms() {
        let v = TfidfVectorizer::fit(&["<EMAIL> pe mail"], TfidfConfig::default());
        assert!(v.contains("<EMAIL>"));
    }
}
