//! Data handling for code-mixed cybercrime complaint classification:
//! ingestion and cleaning, PII anonymization, similarity-gated
//! augmentation, and evaluation reports.

pub mod anonymizer;
pub mod augmenter;
pub mod corpus;
pub mod evaluator;
pub mod fingerprint;
pub mod labels;
pub mod prediction;
pub mod smoke;

pub use corpus::{Complaint, CorpusError, DatasetSplit, DropList, Source};
pub use labels::{CategoryLabel, NUM_LABELS};
pub use prediction::{PredictError, PredictionResult, TextClassifier};
