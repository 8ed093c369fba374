//! Transformer encoders fine-tuned for complaint classification.

pub mod classifier;
pub mod embedding_init;
pub mod grid;
pub mod model;
pub mod registry;
pub mod tokenizer;
pub mod train;

pub use classifier::{ClassifierModel, ModelError};
pub use registry::{lookup, registry, Family, ModelSpec, Pooling};
pub use train::{train, TrainError, TrainOptions, TrainingConfig, TrainingHistory};
