//! Checkpoint discovery and loading.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crimeclass_baselines::BaselineModel;
use crimeclass_classifiers::classifier::METADATA_FILE;
use crimeclass_classifiers::ClassifierModel;
use crimeclass_core::{CategoryLabel, TextClassifier};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Transformer,
    Baseline,
}

/// What `/models` reports for one checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointInfo {
    pub name: String,
    pub path: PathBuf,
    pub kind: CheckpointKind,
    pub fingerprint: Option<String>,
    pub label_order: Vec<CategoryLabel>,
}

pub fn checkpoint_kind(dir: &Path) -> Option<CheckpointKind> {
    if dir.join(METADATA_FILE).is_file() {
        Some(CheckpointKind::Transformer)
    } else if dir.join(crimeclass_baselines::MODEL_FILE).is_file() {
        Some(CheckpointKind::Baseline)
    } else {
        None
    }
}

fn describe(dir: &Path) -> Option<CheckpointInfo> {
    let kind = checkpoint_kind(dir)?;
    let (fingerprint, label_order) = match kind {
        CheckpointKind::Transformer => {
            let meta = ClassifierModel::read_metadata(dir).ok()?;
            (Some(meta.fingerprint), meta.label_order)
        }
        // baseline files carry the full model; listing does not parse them
        CheckpointKind::Baseline => (None, CategoryLabel::ALL.to_vec()),
    };
    Some(CheckpointInfo {
        name: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        path: dir.to_path_buf(),
        kind,
        fingerprint,
        label_order,
    })
}

/// Checkpoints in `root` itself or its immediate subdirectories, sorted by
/// name.
pub fn discover(root: &Path) -> Vec<CheckpointInfo> {
    let mut out: Vec<CheckpointInfo> = describe(root).into_iter().collect();
    if let Ok(entries) = std::fs::read_dir(root) {
        let mut dirs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        out.extend(dirs.iter().filter_map(|d| describe(d)));
    }
    out
}

pub fn load(dir: &Path) -> Result<Arc<dyn TextClassifier>, String> {
    match checkpoint_kind(dir) {
        Some(CheckpointKind::Transformer) => ClassifierModel::load(dir)
            .map(|m| Arc::new(m) as Arc<dyn TextClassifier>)
            .map_err(|e| e.to_string()),
        Some(CheckpointKind::Baseline) => BaselineModel::load(dir)
            .map(|m| Arc::new(m) as Arc<dyn TextClassifier>)
            .map_err(|e| e.to_string()),
        None => Err(format!("{} holds no checkpoint", dir.display())),
    }
}
