//! Classical comparison pipelines: TF-IDF features, truncated SVD, then a
//! tree ensemble or nearest-neighbour classifier.

pub mod ensemble;
pub mod svd;
pub mod tfidf;
pub mod tree;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crimeclass_core::fingerprint::{combine, json_fingerprint, sha256_hex};
use crimeclass_core::{CategoryLabel, Complaint, PredictError, PredictionResult, TextClassifier, NUM_LABELS};
use serde::{Deserialize, Serialize};

use ensemble::{AdaBoost, GbtParams, GradientBoosting, Knn, RandomForest};
use svd::TruncatedSvd;
use tfidf::{TfidfConfig, TfidfVectorizer};

pub const OUT_OF_VOCABULARY: &str = "out_of_vocabulary";
pub const MODEL_FILE: &str = "baseline.json";

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("complaint {0} has no label")]
    MissingLabel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file is malformed: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    GradientBoostedTrees,
    RandomForest,
    AdaptiveBoosting,
    KNearestNeighbors,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        Self::GradientBoostedTrees,
        Self::RandomForest,
        Self::AdaptiveBoosting,
        Self::KNearestNeighbors,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GradientBoostedTrees => "gradient_boosted_trees",
            Self::RandomForest => "random_forest",
            Self::AdaptiveBoosting => "adaptive_boosting",
            Self::KNearestNeighbors => "k_nearest_neighbors",
        }
    }

    /// Name used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::GradientBoostedTrees => "XGBoost",
            Self::RandomForest => "Random Forest",
            Self::AdaptiveBoosting => "AdaBoost",
            Self::KNearestNeighbors => "k-NN",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown baseline kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub tfidf: TfidfConfig,
    pub reduced_dimension: usize,
    pub svd_iterations: usize,
    pub n_estimators: usize,
    pub k_neighbors: usize,
    pub gbt: GbtParams,
    pub adaboost_learning_rate: f64,
    pub adaboost_max_depth: usize,
    pub forest_max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            tfidf: TfidfConfig::default(),
            reduced_dimension: 300,
            svd_iterations: 5,
            n_estimators: 100,
            k_neighbors: 5,
            gbt: GbtParams::default(),
            adaboost_learning_rate: 1.0,
            adaboost_max_depth: 1,
            forest_max_depth: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Fitted {
    Gbt(GradientBoosting),
    Forest(RandomForest),
    Ada(AdaBoost),
    Knn(Knn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub config: BaselineConfig,
    pub label_order: Vec<CategoryLabel>,
    vectorizer: TfidfVectorizer,
    reducer: TruncatedSvd,
    classifier: Fitted,
    /// Training classes, indexed by the classifier's compact class ids.
    classes: Vec<CategoryLabel>,
    /// Training class frequencies over `label_order`.
    priors: Vec<f64>,
    pub train_ids: Vec<String>,
    pub train_ids_sha256: String,
    pub fingerprint: String,
}

impl BaselineModel {
    pub fn fit(train: &[Complaint], kind: BaselineKind, config: BaselineConfig) -> Result<Self, BaselineError> {
        if train.is_empty() {
            return Err(BaselineError::EmptyTrain);
        }
        let labels: Vec<CategoryLabel> = train
            .iter()
            .map(|c| c.category.ok_or_else(|| BaselineError::MissingLabel(c.id.clone())))
            .collect::<Result<_, _>>()?;
        let texts: Vec<&str> = train.iter().map(|c| c.text.as_str()).collect();
        let vectorizer = TfidfVectorizer::fit(&texts, config.tfidf.clone());
        let vocab = vectorizer.vocabulary_len();
        if config.reduced_dimension >= vocab {
            return Err(BaselineError::Config(format!(
                "reduced_dimension {} must be below the realized vocabulary size {vocab}",
                config.reduced_dimension
            )));
        }
        if config.reduced_dimension == 0 {
            return Err(BaselineError::Config("reduced_dimension must be positive".into()));
        }
        let rows: Vec<_> = texts.iter().map(|t| vectorizer.transform(t)).collect();
        let reducer = TruncatedSvd::fit(&rows, vocab, config.reduced_dimension, config.svd_iterations, config.seed);
        let x: Vec<Vec<f64>> = rows.iter().map(|r| reducer.transform(r)).collect();

        let classes: Vec<CategoryLabel> = {
            let mut c = labels.clone();
            c.sort();
            c.dedup();
            c
        };
        let compact: BTreeMap<CategoryLabel, usize> = classes.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        let y: Vec<usize> = labels.iter().map(|l| compact[l]).collect();
        let k = classes.len();
        let classifier = match kind {
            BaselineKind::GradientBoostedTrees => Fitted::Gbt(GradientBoosting::fit(
                &x,
                &y,
                k,
                &GbtParams {
                    n_estimators: config.n_estimators,
                    ..config.gbt.clone()
                },
            )),
            BaselineKind::RandomForest => Fitted::Forest(RandomForest::fit(
                &x,
                &y,
                k,
                config.n_estimators,
                config.forest_max_depth,
                config.seed,
            )),
            BaselineKind::AdaptiveBoosting => Fitted::Ada(AdaBoost::fit(
                &x,
                &y,
                k,
                config.n_estimators,
                config.adaboost_learning_rate,
                config.adaboost_max_depth,
                config.seed,
            )),
            BaselineKind::KNearestNeighbors => Fitted::Knn(Knn::fit(&x, &y, k, config.k_neighbors)),
        };

        let label_order = CategoryLabel::ALL.to_vec();
        let mut priors = vec![0.0; NUM_LABELS];
        for l in &labels {
            priors[l.index()] += 1.0 / labels.len() as f64;
        }
        let mut train_ids: Vec<String> = train.iter().map(|c| c.id.clone()).collect();
        train_ids.sort();
        let train_ids_sha256 = sha256_hex(train_ids.join("\n").as_bytes());
        let fingerprint = combine(&[
            ("kind", kind.as_str()),
            ("config", &json_fingerprint(&config)),
            ("train_ids", &train_ids_sha256),
        ]);
        Ok(Self {
            kind,
            config,
            label_order,
            vectorizer,
            reducer,
            classifier,
            classes,
            priors,
            train_ids,
            train_ids_sha256,
            fingerprint,
        })
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vectorizer.vocabulary_len()
    }

    /// Ids that appear both in training and in `ids`.
    pub fn leaked_ids<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let train: HashSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        ids.into_iter().filter(|id| train.contains(id)).map(str::to_string).collect()
    }

    fn class_probabilities(&self, features: &[f64]) -> Vec<f64> {
        match &self.classifier {
            Fitted::Gbt(m) => m.predict_proba(features),
            Fitted::Forest(m) => m.predict_proba(features),
            Fitted::Ada(m) => m.predict_proba(features),
            Fitted::Knn(m) => m.predict_proba(features),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), BaselineError> {
        let io = |source| BaselineError::Io {
            path: dir.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(dir.join(MODEL_FILE), bytes).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, BaselineError> {
        let path = dir.join(MODEL_FILE);
        let bytes = std::fs::read(&path).map_err(|source| BaselineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

impl TextClassifier for BaselineModel {
    fn kind(&self) -> &str {
        self.kind.as_str()
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn label_order(&self) -> &[CategoryLabel] {
        &self.label_order
    }

    fn predict(&self, text: &str) -> Result<PredictionResult, PredictError> {
        if text.trim().is_empty() {
            return Err(PredictError::EmptyText);
        }
        let row = self.vectorizer.transform(text);
        if row.is_empty() {
            // nothing in vocabulary: fall back to the training prior, whose
            // argmax is the majority class
            let mut result = PredictionResult::from_probabilities(&self.label_order, &self.priors, &self.fingerprint);
            result.flags.push(OUT_OF_VOCABULARY.to_string());
            return Ok(result);
        }
        let compact = self.class_probabilities(&self.reducer.transform(&row));
        let mut probs = vec![0.0; self.label_order.len()];
        for (p, label) in compact.iter().zip(&self.classes) {
            probs[label.index()] = *p;
        }
        Ok(PredictionResult::from_probabilities(&self.label_order, &probs, &self.fingerprint))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Complaint> {
        let mut out = Vec::new();
        for i in 0..20 {
            out.push(Complaint::labeled(
                format!("a{i}"),
                format!("upi bank paise refund case{i}"),
                CategoryLabel::FinancialFraud,
            ));
            out.push(Complaint::labeled(
                format!("b{i}"),
                format!("instagram troll post followers case{i}"),
                CategoryLabel::SocialMediaCrime,
            ));
        }
        out
    }

    fn small() -> BaselineConfig {
        BaselineConfig {
            reduced_dimension: 5,
            n_estimators: 10,
            ..Default::default()
        }
    }

    #[test]
    fn disjoint_vocabularies_fit_perfectly() {
        let train = corpus();
        for kind in BaselineKind::ALL {
            let m = BaselineModel::fit(&train, kind, small()).unwrap();
            let correct = train
                .iter()
                .filter(|c| m.predict(&c.text).unwrap().label == c.category.unwrap())
                .count();
            assert_eq!(correct, train.len(), "{kind:?}");
        }
    }

    #[test]
    fn precondition_errors() {
        assert!(matches!(
            BaselineModel::fit(&[], BaselineKind::KNearestNeighbors, small()),
            Err(BaselineError::EmptyTrain)
        ));
        let cfg = BaselineConfig {
            reduced_dimension: 5000,
            ..small()
        };
        assert!(matches!(
            BaselineModel::fit(&corpus(), BaselineKind::KNearestNeighbors, cfg),
            Err(BaselineError::Config(_))
        ));
        let unlabeled = vec![Complaint::original("x", "text")];
        assert!(matches!(
            BaselineModel::fit(&unlabeled, BaselineKind::RandomForest, small()),
            Err(BaselineError::MissingLabel(_))
        ));
    }

    #[test]
    fn out_of_vocabulary_predicts_majority_with_flag() {
        let mut train = corpus();
        train.push(Complaint::labeled("extra", "upi fraud again", CategoryLabel::FinancialFraud));
        let m = BaselineModel::fit(&train, BaselineKind::GradientBoostedTrees, small()).unwrap();
        let r = m.predict("zzz qqq").unwrap();
        assert_eq!(r.label, CategoryLabel::FinancialFraud);
        assert_eq!(r.flags, vec![OUT_OF_VOCABULARY]);
        assert!((r.score_sum() - 1.0).abs() < 1e-9);
        assert!(matches!(m.predict("  "), Err(PredictError::EmptyText)));
    }

    #[test]
    fn scores_cover_all_labels_and_repeat() {
        let m = BaselineModel::fit(&corpus(), BaselineKind::RandomForest, small()).unwrap();
        let a = m.predict("upi paise").unwrap();
        assert_eq!(a.scores.len(), NUM_LABELS);
        assert!((a.score_sum() - 1.0).abs() < 1e-9);
        assert_eq!(a, m.predict("upi paise").unwrap());
    }

    #[test]
    fn fingerprint_tracks_training_ids() {
        let train = corpus();
        let a = BaselineModel::fit(&train, BaselineKind::KNearestNeighbors, small()).unwrap();
        let mut more = train.clone();
        more.push(Complaint::labeled("v1", "upi bank khata", CategoryLabel::FinancialFraud));
        let b = BaselineModel::fit(&more, BaselineKind::KNearestNeighbors, small()).unwrap();
        assert_ne!(a.fingerprint, b.fingerprint);
        assert_eq!(a.leaked_ids(["a1", "zz"]), vec!["a1".to_string()]);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BaselineModel::fit(&corpus(), BaselineKind::AdaptiveBoosting, small()).unwrap();
        m.save(dir.path()).unwrap();
        let back = BaselineModel::load(dir.path()).unwrap();
        assert_eq!(back.predict("troll post").unwrap(), m.predict("troll post").unwrap());
    }
}
