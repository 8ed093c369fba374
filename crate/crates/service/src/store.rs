//! Submission persistence.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use crimeclass_core::{CategoryLabel, PredictionResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmissionStatus {
    AutoClassified,
    Reviewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub received_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub anonymized_text: String,
    /// Only kept when privacy mode is off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    pub prediction: PredictionResult,
    #[serde(default)]
    pub operator_feedback: Option<CategoryLabel>,
    pub status: SubmissionStatus,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unknown submission {0}")]
    NotFound(String),
}

pub trait SubmissionStore: Send + Sync {
    fn insert(&self, submission: &Submission) -> Result<(), StoreError>;

    fn get(&self, id: &str) -> Result<Option<Submission>, StoreError>;

    /// Newest first.
    fn list(&self, limit: usize, offset: usize) -> Result<(Vec<Submission>, usize), StoreError>;

    /// Apply `update` to the current record and persist the result.
    fn update(&self, id: &str, update: &mut dyn FnMut(&mut Submission)) -> Result<Submission, StoreError>;

    fn all(&self) -> Result<Vec<Submission>, StoreError>;
}

/// Append-only JSON-lines file; the last line for an id is current.
/// Records are indexed in memory at open time.
pub struct JsonlStore {
    path: PathBuf,
    state: Mutex<Index>,
}

#[derive(Default)]
struct Index {
    records: HashMap<String, Submission>,
    /// Insertion order of ids.
    order: Vec<String>,
}

impl JsonlStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut index = Index::default();
        if path.exists() {
            let file = std::fs::File::open(path).map_err(io)?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let s: Submission = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if !index.records.contains_key(&s.id) {
                    index.order.push(s.id.clone());
                }
                index.records.insert(s.id.clone(), s);
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            state: Mutex::new(index),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, s: &Submission) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        let mut line = serde_json::to_string(s).expect("submission serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io)?;
        file.flush().map_err(io)
    }
}

impl SubmissionStore for JsonlStore {
    fn insert(&self, submission: &Submission) -> Result<(), StoreError> {
        let mut state = self.state.lock().expect("store lock");
        self.append(submission)?;
        if !state.records.contains_key(&submission.id) {
            state.order.push(submission.id.clone());
        }
        state.records.insert(submission.id.clone(), submission.clone());
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Option<Submission>, StoreError> {
        Ok(self.state.lock().expect("store lock").records.get(id).cloned())
    }

    fn list(&self, limit: usize, offset: usize) -> Result<(Vec<Submission>, usize), StoreError> {
        let state = self.state.lock().expect("store lock");
        let page = state
            .order
            .iter()
            .rev()
            .skip(offset)
            .take(limit)
            .map(|id| state.records[id].clone())
            .collect();
        Ok((page, state.order.len()))
    }

    fn update(&self, id: &str, update: &mut dyn FnMut(&mut Submission)) -> Result<Submission, StoreError> {
        let mut state = self.state.lock().expect("store lock");
        let mut record = state
            .records
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        update(&mut record);
        self.append(&record)?;
        state.records.insert(id.to_string(), record.clone());
        Ok(record)
    }

    fn all(&self) -> Result<Vec<Submission>, StoreError> {
        let state = self.state.lock().expect("store lock");
        Ok(state.order.iter().map(|id| state.records[id].clone()).collect())
    }
}
