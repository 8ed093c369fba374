//! Complaint data model, ingestion, cleaning, label standardization and
//! stratified splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labels::{collapse_whitespace, CategoryLabel};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown label {label:?} (complaint {id})")]
    UnknownLabel { id: String, label: String },
    #[error("complaint {0} has no category; standardize labels before splitting")]
    MissingCategory(String),
    #[error("class {label} has {count} sample(s); at least 2 are required to split")]
    TooFewSamples { label: CategoryLabel, count: usize },
    #[error("invalid validation fraction {0}")]
    InvalidFraction(f64),
    #[error("invalid complaint {id}: {message}")]
    Invalid { id: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Original,
    Augmented,
}

/// A single reported incident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Complaint {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryLabel>,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl Complaint {
    pub fn original(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            raw_category: None,
            category: None,
            source: Source::Original,
            parent_id: None,
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: CategoryLabel) -> Self {
        Self {
            category: Some(label),
            ..Self::original(id, text)
        }
    }

    pub fn augmented(
        id: impl Into<String>,
        text: impl Into<String>,
        label: CategoryLabel,
        parent_id: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            raw_category: None,
            category: Some(label),
            source: Source::Augmented,
            parent_id: Some(parent_id.into()),
        }
    }

    /// Checks the structural invariants of a complaint.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: &str| CorpusError::Invalid {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.text.trim().is_empty() {
            return Err(invalid("empty text"));
        }
        match (self.source, &self.parent_id) {
            (Source::Augmented, None) => Err(invalid("augmented complaint without parent_id")),
            (Source::Original, Some(_)) => Err(invalid("original complaint with parent_id")),
            _ => Ok(()),
        }
    }
}

/// Normalized form used for duplicate detection: case-folded with
/// whitespace runs collapsed to one space.
pub fn dedup_key(text: &str) -> String {
    collapse_whitespace(&text.to_lowercase())
}

/// Audit trail for every sample removed between ingestion and splitting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_count: usize,
    pub output_count: usize,
    pub removed_duplicates: usize,
    pub removed_missing: usize,
    pub removed_rare_class: usize,
    pub rare_classes: Vec<String>,
    pub removed_test_only: usize,
    pub excluded_test_only_classes: Vec<String>,
    pub label_remap_count: usize,
}

impl CleaningReport {
    pub fn total_removed(&self) -> usize {
        self.removed_duplicates
            + self.removed_missing
            + self.removed_rare_class
            + self.removed_test_only
    }

    /// `input − output` equals the sum of all removal counters.
    pub fn reconciles(&self) -> bool {
        self.input_count >= self.output_count
            && self.input_count - self.output_count == self.total_removed()
    }

    /// Fold a later stage's report into this one (this report's input is
    /// kept, the later output wins).
    pub fn merge(&mut self, later: &CleaningReport) {
        self.output_count = later.output_count;
        self.removed_duplicates += later.removed_duplicates;
        self.removed_missing += later.removed_missing;
        self.removed_rare_class += later.removed_rare_class;
        self.removed_test_only += later.removed_test_only;
        self.label_remap_count += later.label_remap_count;
        for c in &later.rare_classes {
            if !self.rare_classes.contains(c) {
                self.rare_classes.push(c.clone());
            }
        }
        for c in &later.excluded_test_only_classes {
            if !self.excluded_test_only_classes.contains(c) {
                self.excluded_test_only_classes.push(c.clone());
            }
        }
    }
}

/// Column names of the delimited input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub text_column: String,
    pub label_column: String,
    /// When absent, ids are assigned as `row-<n>` (1-based data rows).
    pub id_column: Option<String>,
    pub delimiter: u8,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            text_column: "text".into(),
            label_column: "label".into(),
            id_column: None,
            delimiter: b',',
        }
    }
}

fn is_missing(field: &str) -> bool {
    let t = field.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null") || t == "None"
}

/// Parse delimited rows into complaints. Rows with a missing text cell are
/// skipped and counted; exact (normalized) duplicates are dropped.
pub fn ingest<R: Read>(
    reader: R,
    config: &IngestConfig,
) -> Result<(Vec<Complaint>, CleaningReport), CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Ingest {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| {
                CorpusError::Config(format!(
                    "column {name:?} not found; header has {:?}",
                    headers.iter().collect::<Vec<_>>()
                ))
            })
    };
    let text_idx = column(&config.text_column)?;
    let label_idx = column(&config.label_column)?;
    let id_idx = config.id_column.as_deref().map(column).transpose()?;
    let source_idx = headers.iter().position(|h| h == "source");
    let parent_idx = headers.iter().position(|h| h == "parent_id");

    let mut complaints = Vec::new();
    let mut removed_missing = 0;
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CorpusError::Ingest {
            row,
            message: e.to_string(),
        })?;
        rows += 1;
        let text = record.get(text_idx).unwrap_or("");
        if is_missing(text) {
            removed_missing += 1;
            continue;
        }
        let id = match id_idx {
            Some(idx) => record.get(idx).unwrap_or("").trim().to_string(),
            None => format!("row-{row}"),
        };
        if id.is_empty() {
            return Err(CorpusError::Ingest {
                row,
                message: "empty id".into(),
            });
        }
        let raw = record.get(label_idx).unwrap_or("");
        let parent_id = parent_idx
            .and_then(|idx| record.get(idx))
            .filter(|p| !p.trim().is_empty())
            .map(str::to_string);
        let source = match source_idx.and_then(|idx| record.get(idx)) {
            Some("augmented") => Source::Augmented,
            _ => Source::Original,
        };
        let complaint = Complaint {
            id,
            text: text.to_string(),
            raw_category: (!is_missing(raw)).then(|| raw.to_string()),
            category: None,
            source,
            parent_id,
        };
        complaint.validate().map_err(|e| CorpusError::Ingest {
            row,
            message: e.to_string(),
        })?;
        complaints.push(complaint);
    }

    let (out, mut report) = clean(complaints);
    report.input_count = rows;
    report.removed_missing += removed_missing;
    Ok((out, report))
}

pub fn ingest_file(
    path: &Path,
    config: &IngestConfig,
) -> Result<(Vec<Complaint>, CleaningReport), CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    ingest(BufReader::new(file), config)
}

/// Drop empty texts and normalized duplicates, keeping first occurrences.
pub fn clean(complaints: Vec<Complaint>) -> (Vec<Complaint>, CleaningReport) {
    let mut report = CleaningReport {
        input_count: complaints.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(complaints.len());
    for c in complaints {
        if c.text.trim().is_empty() {
            report.removed_missing += 1;
            continue;
        }
        if !seen.insert(dedup_key(&c.text)) {
            report.removed_duplicates += 1;
            continue;
        }
        out.push(c);
    }
    report.output_count = out.len();
    (out, report)
}

/// Label classes to remove rather than map. Kept as configuration so the
/// same code serves other corpora.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropList {
    /// Classes with too few samples to split.
    pub rare: Vec<String>,
    /// Classes that only occur in the test data.
    pub test_only: Vec<String>,
}

impl DropList {
    /// The drop-list observed for the reference complaint dataset.
    pub fn reference() -> Self {
        Self {
            rare: vec!["Report Unlawful Content".into()],
            test_only: vec!["Crime Against Women & Children".into()],
        }
    }

    fn classify(&self, raw: &str) -> Option<DropKind> {
        let key = collapse_whitespace(raw);
        if self.rare.iter().any(|r| collapse_whitespace(r) == key) {
            Some(DropKind::Rare)
        } else if self.test_only.iter().any(|r| collapse_whitespace(r) == key) {
            Some(DropKind::TestOnly)
        } else {
            None
        }
    }
}

enum DropKind {
    Rare,
    TestOnly,
}

/// Map raw labels onto the closed category set. Drop-listed classes are
/// removed and counted; anything else that does not map is an error.
pub fn standardize_labels(
    complaints: Vec<Complaint>,
    drop: &DropList,
) -> Result<(Vec<Complaint>, CleaningReport), CorpusError> {
    let mut report = CleaningReport {
        input_count: complaints.len(),
        ..Default::default()
    };
    let mut rare = BTreeSet::new();
    let mut test_only = BTreeSet::new();
    let mut out = Vec::with_capacity(complaints.len());
    for mut c in complaints {
        let raw = match (&c.raw_category, c.category) {
            (Some(raw), _) => raw.clone(),
            (None, Some(_)) => {
                out.push(c);
                continue;
            }
            (None, None) => {
                return Err(CorpusError::UnknownLabel {
                    id: c.id,
                    label: String::new(),
                })
            }
        };
        match drop.classify(&raw) {
            Some(DropKind::Rare) => {
                report.removed_rare_class += 1;
                rare.insert(collapse_whitespace(&raw));
                continue;
            }
            Some(DropKind::TestOnly) => {
                report.removed_test_only += 1;
                test_only.insert(collapse_whitespace(&raw));
                continue;
            }
            None => {}
        }
        let label = CategoryLabel::standardize(&raw).map_err(|_| CorpusError::UnknownLabel {
            id: c.id.clone(),
            label: raw.clone(),
        })?;
        if label.name() != collapse_whitespace(&raw) {
            report.label_remap_count += 1;
        }
        c.category = Some(label);
        out.push(c);
    }
    report.rare_classes = rare.into_iter().collect();
    report.excluded_test_only_classes = test_only.into_iter().collect();
    report.output_count = out.len();
    Ok((out, report))
}

/// Train / validation / test partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Complaint>,
    pub validation: Vec<Complaint>,
    pub test: Vec<Complaint>,
    pub seed: u64,
}

fn category_of(c: &Complaint) -> Result<CategoryLabel, CorpusError> {
    c.category
        .ok_or_else(|| CorpusError::MissingCategory(c.id.clone()))
}

/// Per-class counts.
pub fn class_counts(complaints: &[Complaint]) -> BTreeMap<CategoryLabel, usize> {
    let mut counts = BTreeMap::new();
    for c in complaints {
        if let Some(label) = c.category {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    counts
}

/// Stratified split: within each class a seeded shuffle assigns
/// `round(n · fraction)` samples (clamped to `1..n`) to validation.
/// The test partition is left empty; attach one with [`DatasetSplit::with_test`].
pub fn split(
    complaints: &[Complaint],
    validation_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(validation_fraction));
    }
    let mut by_class: BTreeMap<CategoryLabel, Vec<&Complaint>> = BTreeMap::new();
    for c in complaints {
        by_class.entry(category_of(c)?).or_default().push(c);
    }
    for (label, members) in &by_class {
        if members.len() < 2 {
            return Err(CorpusError::TooFewSamples {
                label: *label,
                count: members.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val_ids = HashSet::new();
    for members in by_class.values() {
        let n = members.len();
        let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..n_val] {
            val_ids.insert(members[i].id.as_str());
        }
    }

    let (validation, train): (Vec<_>, Vec<_>) = complaints
        .iter()
        .cloned()
        .partition(|c| val_ids.contains(c.id.as_str()));
    Ok(DatasetSplit {
        train,
        validation,
        test: Vec::new(),
        seed,
    })
}

const PARTITIONS: [&str; 3] = ["train", "validation", "test"];

impl DatasetSplit {
    pub fn with_test(mut self, test: Vec<Complaint>) -> Self {
        self.test = test;
        self
    }

    fn partition(&self, name: &str) -> &[Complaint] {
        match name {
            "train" => &self.train,
            "validation" => &self.validation,
            _ => &self.test,
        }
    }

    /// Checks id-disjointness and that every validation class also occurs
    /// in train.
    pub fn check(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for name in PARTITIONS {
            for c in self.partition(name) {
                if !seen.insert(c.id.as_str()) {
                    return Err(CorpusError::Invalid {
                        id: c.id.clone(),
                        message: format!("id appears in more than one partition ({name})"),
                    });
                }
            }
        }
        let train_classes = class_counts(&self.train);
        for label in class_counts(&self.validation).keys() {
            if !train_classes.contains_key(label) {
                return Err(CorpusError::Config(format!(
                    "class {label} present in validation but not in train"
                )));
            }
        }
        Ok(())
    }

    /// Writes `{train,validation,test}.csv`, matching `.ids` manifests and
    /// `split.json`.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for name in PARTITIONS {
            let part = self.partition(name);
            write_complaints(&dir.join(format!("{name}.csv")), part)?;
            let ids_path = dir.join(format!("{name}.ids"));
            let mut ids = String::new();
            for c in part {
                ids.push_str(&c.id);
                ids.push('\n');
            }
            fs::write(&ids_path, ids).map_err(io_err(&ids_path))?;
        }
        let meta = dir.join("split.json");
        let body = serde_json::json!({
            "seed": self.seed,
            "train": self.train.len(),
            "validation": self.validation.len(),
            "test": self.test.len(),
        });
        fs::write(&meta, serde_json::to_vec_pretty(&body).expect("json")).map_err(io_err(&meta))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let meta = dir.join("split.json");
        let raw = fs::read(&meta).map_err(io_err(&meta))?;
        let value: serde_json::Value = serde_json::from_slice(&raw)
            .map_err(|e| CorpusError::Config(format!("{}: {e}", meta.display())))?;
        let seed = value["seed"].as_u64().unwrap_or_default();
        let read = |name: &str| read_complaints(&dir.join(format!("{name}.csv")));
        Ok(Self {
            train: read("train")?,
            validation: read("validation")?,
            test: read("test")?,
            seed,
        })
    }
}

const CORPUS_HEADER: [&str; 5] = ["id", "text", "label", "source", "parent_id"];

/// Write complaints in the canonical corpus format
/// (`id,text,label,source,parent_id`). The label column carries the
/// standardized category when present, the raw label otherwise.
pub fn write_complaints_to<W: Write>(
    writer: W,
    complaints: &[Complaint],
) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| CorpusError::Config(e.to_string());
    wtr.write_record(CORPUS_HEADER).map_err(csv_err)?;
    for c in complaints {
        let label = c
            .category
            .map(|l| l.name().to_string())
            .or_else(|| c.raw_category.clone())
            .unwrap_or_default();
        let source = match c.source {
            Source::Original => "original",
            Source::Augmented => "augmented",
        };
        wtr.write_record([
            c.id.as_str(),
            c.text.as_str(),
            label.as_str(),
            source,
            c.parent_id.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()
        .map_err(|e| CorpusError::Config(e.to_string()))?;
    Ok(())
}

pub fn write_complaints(path: &Path, complaints: &[Complaint]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_complaints_to(std::io::BufWriter::new(file), complaints)
}

/// Read a file produced by [`write_complaints`]. Labels are parsed as
/// standardized names when possible and kept raw otherwise.
pub fn read_complaints(path: &Path) -> Result<Vec<Complaint>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_complaints_from(BufReader::new(file))
}

pub fn read_complaints_from<R: Read>(reader: R) -> Result<Vec<Complaint>, CorpusError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CorpusError::Ingest {
            row: i + 1,
            message: e.to_string(),
        })?;
        let field = |k: usize| record.get(k).unwrap_or("").to_string();
        let label = field(2);
        let category = label.parse::<CategoryLabel>().ok();
        let parent = field(4);
        let complaint = Complaint {
            id: field(0),
            text: field(1),
            raw_category: (category.is_none() && !label.is_empty()).then_some(label),
            category,
            source: if field(3) == "augmented" {
                Source::Augmented
            } else {
                Source::Original
            },
            parent_id: (!parent.is_empty()).then_some(parent),
        };
        out.push(complaint);
    }
    Ok(out)
}

/// Read a newline-separated id manifest.
pub fn read_ids(path: &Path) -> Result<Vec<String>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map_err(io_err(path)))
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv_input(rows: &[(&str, &str)]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["text", "label"]).unwrap();
        for (t, l) in rows {
            w.write_record([t, l]).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    #[test]
    fn ingest_carries_raw_label() {
        let input = csv_input(&[("fraud hua mere account se", "Online Financial Fraud")]);
        let (out, report) = ingest(input.as_bytes(), &IngestConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            out[0].raw_category.as_deref(),
            Some("Online Financial Fraud")
        );
        assert_eq!(out[0].text, "fraud hua mere account se");
        assert_eq!(out[0].id, "row-1");
        assert!(report.reconciles());
    }

    #[test]
    fn ingest_counts_missing_text() {
        let input = csv_input(&[
            ("NaN", "Ransomware"),
            ("", "Ransomware"),
            ("ok", "Ransomware"),
        ]);
        let (out, report) = ingest(input.as_bytes(), &IngestConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(report.removed_missing, 2);
        assert!(report.reconciles());
    }

    #[test]
    fn ingest_drops_duplicates() {
        let row = ("same text", "Ransomware");
        let input = csv_input(&[row, row, row]);
        let (out, report) = ingest(input.as_bytes(), &IngestConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(report.removed_duplicates, 2);
        assert_eq!(report.input_count, 3);
        assert!(report.reconciles());
    }

    #[test]
    fn ingest_unknown_column_is_config_error() {
        let input = csv_input(&[("a", "b")]);
        let cfg = IngestConfig {
            text_column: "crimeaditionalinfo".into(),
            ..Default::default()
        };
        assert!(matches!(
            ingest(input.as_bytes(), &cfg),
            Err(CorpusError::Config(_))
        ));
    }

    #[test]
    fn ingest_malformed_row_names_row() {
        let input = "text,label\n\"ok\",Ransomware\n\"a\",\"b\",\"c\"\n";
        match ingest(input.as_bytes(), &IngestConfig::default()) {
            Err(CorpusError::Ingest { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn raw(id: &str, label: &str) -> Complaint {
        Complaint {
            raw_category: Some(label.into()),
            ..Complaint::original(id, format!("text {id}"))
        }
    }

    #[test]
    fn standardize_maps_and_drops() {
        let input = vec![
            raw("1", "Online Financial Fraud"),
            raw("2", "Child Pornography CPChild Sexual Abuse Material CSAM"),
            raw("3", "Report Unlawful Content"),
            raw("4", "Crime Against Women & Children"),
            raw("5", "Ransomware"),
        ];
        let (out, report) = standardize_labels(input, &DropList::reference()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].category, Some(CategoryLabel::FinancialFraud));
        assert_eq!(out[1].category, Some(CategoryLabel::ChildAbuseMaterial));
        assert_eq!(out[2].category, Some(CategoryLabel::Ransomware));
        assert_eq!(report.removed_rare_class, 1);
        assert_eq!(report.rare_classes, vec!["Report Unlawful Content"]);
        assert_eq!(
            report.excluded_test_only_classes,
            vec!["Crime Against Women & Children"]
        );
        assert_eq!(report.label_remap_count, 2);
        assert!(report.reconciles());
    }

    #[test]
    fn standardize_unknown_label_fails_loudly() {
        let err =
            standardize_labels(vec![raw("9", "Mystery Crime")], &DropList::default()).unwrap_err();
        match err {
            CorpusError::UnknownLabel { id, label } => {
                assert_eq!(id, "9");
                assert_eq!(label, "Mystery Crime");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clean_examples() {
        let texts = |v: &[&str]| {
            v.iter()
                .enumerate()
                .map(|(i, t)| Complaint::original(i.to_string(), *t))
                .collect::<Vec<_>>()
        };
        let (out, r) = clean(texts(&["abc", "abc", "xyz"]));
        assert_eq!(
            out.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(),
            ["abc", "xyz"]
        );
        assert_eq!(r.removed_duplicates, 1);
        let (out, r) = clean(texts(&["  ", "ok"]));
        assert_eq!(out.len(), 1);
        assert_eq!(r.removed_missing, 1);
        let (out, r) = clean(Vec::new());
        assert!(out.is_empty());
        assert_eq!(r, CleaningReport::default());
    }

    #[test]
    fn dedup_is_case_and_whitespace_insensitive() {
        let (out, _) = clean(vec![
            Complaint::original("a", "Paise  Kat Gaye"),
            Complaint::original("b", "paise kat\tgaye "),
        ]);
        assert_eq!(out.len(), 1);
    }

    fn labeled_corpus(counts: &[(CategoryLabel, usize)]) -> Vec<Complaint> {
        let mut out = Vec::new();
        for (label, n) in counts {
            for i in 0..*n {
                out.push(Complaint::labeled(
                    format!("{}-{i}", label.index()),
                    format!("{label} sample {i}"),
                    *label,
                ));
            }
        }
        out
    }

    #[test]
    fn split_ten_samples() {
        let corpus = labeled_corpus(&[(CategoryLabel::Ransomware, 10)]);
        let s = split(&corpus, 0.2, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (8, 2));
        assert_eq!(s, split(&corpus, 0.2, 7).unwrap());
        s.check().unwrap();
    }

    #[test]
    fn split_rejects_singleton_class() {
        let corpus = labeled_corpus(&[
            (CategoryLabel::Ransomware, 5),
            (CategoryLabel::CyberTerrorism, 1),
        ]);
        assert!(matches!(
            split(&corpus, 0.2, 1),
            Err(CorpusError::TooFewSamples { count: 1, .. })
        ));
    }

    #[test]
    fn split_requires_categories() {
        let corpus = vec![Complaint::original("x", "t")];
        assert!(matches!(
            split(&corpus, 0.2, 1),
            Err(CorpusError::MissingCategory(_))
        ));
    }

    #[test]
    fn split_round_trips_through_disk() {
        let corpus = labeled_corpus(&[
            (CategoryLabel::Ransomware, 6),
            (CategoryLabel::FinancialFraud, 9),
        ]);
        let s = split(&corpus, 0.2, 3)
            .unwrap()
            .with_test(vec![Complaint::labeled(
                "t1",
                "test, with \"quotes\"\nand newline",
                CategoryLabel::Ransomware,
            )]);
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = DatasetSplit::load(dir.path()).unwrap();
        assert_eq!(back, s);
        assert_eq!(read_ids(&dir.path().join("test.ids")).unwrap(), vec!["t1"]);
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(texts in proptest::collection::vec("[ aAbB]{0,6}", 0..30)) {
            let input: Vec<_> = texts.iter().enumerate()
                .map(|(i, t)| Complaint::original(i.to_string(), t.clone())).collect();
            let (once, r1) = clean(input);
            prop_assert!(r1.reconciles());
            let (twice, r2) = clean(once.clone());
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(r2.total_removed(), 0);
        }

        #[test]
        fn split_is_stratified_and_disjoint(
            sizes in proptest::collection::vec(2usize..60, 1..6),
            seed in any::<u64>(),
        ) {
            let counts: Vec<_> = sizes.iter().enumerate()
                .map(|(i, n)| (CategoryLabel::ALL[i], *n)).collect();
            let corpus = labeled_corpus(&counts);
            let s = split(&corpus, 0.2, seed).unwrap();
            s.check().unwrap();
            prop_assert_eq!(s.train.len() + s.validation.len(), corpus.len());
            let val = class_counts(&s.validation);
            for (label, n) in counts {
                let v = *val.get(&label).unwrap_or(&0) as f64;
                prop_assert!((v - n as f64 * 0.2).abs() <= 1.0);
            }
        }
    }
}
