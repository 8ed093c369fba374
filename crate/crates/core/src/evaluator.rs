//! Accuracy / precision / recall / F1 reports and model comparison tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::DropList;
use crate::labels::{CategoryLabel, NUM_LABELS};
use crate::prediction::PredictionResult;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("gold labels outside the category set: {0:?}")]
    UnknownGold(Vec<String>),
    #[error("duplicate model names in comparison: {0:?}")]
    DuplicateModel(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Macro,
    #[default]
    Weighted,
}

impl std::str::FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "macro" => Ok(Self::Macro),
            "weighted" => Ok(Self::Weighted),
            other => Err(format!("unknown averaging {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub model_name: String,
    pub per_class: BTreeMap<CategoryLabel, ClassMetrics>,
    /// Headline numbers in the requested averaging mode.
    pub aggregate: AggregateMetrics,
    pub macro_avg: AggregateMetrics,
    pub weighted_avg: AggregateMetrics,
    /// Rows are gold labels, columns predictions, both in canonical order.
    pub confusion_matrix: Vec<Vec<usize>>,
    pub total: usize,
    pub excluded_classes: Vec<String>,
    pub excluded_count: usize,
    /// Metrics that hit a zero denominator and were set to 0.
    pub zero_division: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Score predictions against gold labels.
pub fn evaluate(
    model_name: &str,
    predictions: &[(CategoryLabel, PredictionResult)],
    averaging: Averaging,
) -> Result<EvaluationReport, EvalError> {
    let pairs: Vec<(CategoryLabel, CategoryLabel)> =
        predictions.iter().map(|(g, p)| (*g, p.label)).collect();
    evaluate_pairs(model_name, &pairs, averaging)
}

/// Score `(gold, predicted)` label pairs.
pub fn evaluate_pairs(
    model_name: &str,
    pairs: &[(CategoryLabel, CategoryLabel)],
    averaging: Averaging,
) -> Result<EvaluationReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = vec![vec![0usize; NUM_LABELS]; NUM_LABELS];
    for (g, p) in pairs {
        cm[g.index()][p.index()] += 1;
    }
    let total = pairs.len();
    let correct: usize = (0..NUM_LABELS).map(|i| cm[i][i]).sum();
    let accuracy = correct as f64 / total as f64;

    let mut per_class = BTreeMap::new();
    let mut zero_division = Vec::new();
    for label in CategoryLabel::ALL {
        let i = label.index();
        let support: usize = cm[i].iter().sum();
        let predicted: usize = cm.iter().map(|row| row[i]).sum();
        if support == 0 && predicted == 0 {
            continue;
        }
        let tp = cm[i][i];
        let precision = ratio(tp, predicted).unwrap_or_else(|| {
            zero_division.push(format!("precision:{label}"));
            0.0
        });
        let recall = ratio(tp, support).unwrap_or_else(|| {
            zero_division.push(format!("recall:{label}"));
            0.0
        });
        per_class.insert(
            label,
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            },
        );
    }

    let n_classes = per_class.len() as f64;
    let macro_avg = AggregateMetrics {
        accuracy,
        precision: per_class.values().map(|m| m.precision).sum::<f64>() / n_classes,
        recall: per_class.values().map(|m| m.recall).sum::<f64>() / n_classes,
        f1: per_class.values().map(|m| m.f1).sum::<f64>() / n_classes,
        averaging: Averaging::Macro,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .values()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total as f64
    };
    let weighted_avg = AggregateMetrics {
        accuracy,
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        averaging: Averaging::Weighted,
    };
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_name: model_name.to_string(),
        per_class,
        aggregate: match averaging {
            Averaging::Macro => macro_avg,
            Averaging::Weighted => weighted_avg,
        },
        macro_avg,
        weighted_avg,
        confusion_matrix: cm,
        total,
        excluded_classes: Vec::new(),
        excluded_count: 0,
        zero_division,
    })
}

/// Evaluate predictions whose gold labels are raw strings. Gold labels on
/// the drop-list's test-only classes are excluded and counted; any other
/// label that does not resolve is an error listing every offender.
pub fn evaluate_raw(
    model_name: &str,
    predictions: &[(String, PredictionResult)],
    drop: &DropList,
    averaging: Averaging,
) -> Result<EvaluationReport, EvalError> {
    let excluded_names: HashSet<String> =
        drop.test_only.iter().chain(&drop.rare).cloned().collect();
    let mut kept = Vec::new();
    let mut unknown = Vec::new();
    let mut excluded = std::collections::BTreeSet::new();
    let mut excluded_count = 0;
    for (gold, pred) in predictions {
        let g = gold.split_whitespace().collect::<Vec<_>>().join(" ");
        if excluded_names.contains(&g) {
            excluded.insert(g);
            excluded_count += 1;
            continue;
        }
        match CategoryLabel::standardize(gold) {
            Ok(label) => kept.push((label, pred.label)),
            Err(_) => unknown.push(gold.clone()),
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(EvalError::UnknownGold(unknown));
    }
    let mut report = evaluate_pairs(model_name, &kept, averaging)?;
    report.excluded_classes = excluded.into_iter().collect();
    report.excluded_count = excluded_count;
    Ok(report)
}

impl EvaluationReport {
    /// Aggregate-only report, for rendering externally reported numbers.
    pub fn summary_only(
        model_name: &str,
        accuracy: f64,
        precision: f64,
        recall: f64,
        f1: f64,
    ) -> Self {
        let aggregate = AggregateMetrics {
            accuracy,
            precision,
            recall,
            f1,
            averaging: Averaging::Weighted,
        };
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            model_name: model_name.to_string(),
            per_class: BTreeMap::new(),
            aggregate,
            macro_avg: AggregateMetrics {
                averaging: Averaging::Macro,
                ..aggregate
            },
            weighted_avg: aggregate,
            confusion_matrix: Vec::new(),
            total: 0,
            excluded_classes: Vec::new(),
            excluded_count: 0,
            zero_division: Vec::new(),
        }
    }

    /// Per-class table in markdown.
    pub fn render_per_class_markdown(&self) -> String {
        let mut out = String::from(
            "| Class | Precision | Recall | F1-Score | Support |\n|---|---:|---:|---:|---:|\n",
        );
        for (label, m) in &self.per_class {
            let _ = writeln!(
                out,
                "| {label} | {:.4} | {:.4} | {:.4} | {} |",
                m.precision, m.recall, m.f1, m.support
            );
        }
        out
    }
}

const COLUMNS: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1-Score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_name: String,
    pub values: [f64; 4],
    /// Whether each column value is the best in the table.
    pub best: [bool; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Rank reports by F1 (descending, stable) and mark the best value of
/// every column.
pub fn compare(reports: &[EvaluationReport]) -> Result<ComparisonTable, EvalError> {
    let mut seen = HashSet::new();
    let dups: Vec<String> = reports
        .iter()
        .filter(|r| !seen.insert(r.model_name.as_str()))
        .map(|r| r.model_name.clone())
        .collect();
    if !dups.is_empty() {
        return Err(EvalError::DuplicateModel(dups));
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            model_name: r.model_name.clone(),
            values: [
                r.aggregate.accuracy,
                r.aggregate.precision,
                r.aggregate.recall,
                r.aggregate.f1,
            ],
            best: [false; 4],
        })
        .collect();
    rows.sort_by(|a, b| b.values[3].total_cmp(&a.values[3]));
    for col in 0..4 {
        let max = rows
            .iter()
            .map(|r| r.values[col])
            .fold(f64::NEG_INFINITY, f64::max);
        for r in &mut rows {
            r.best[col] = r.values[col] == max;
        }
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    /// Markdown table; best values in bold.
    pub fn to_markdown(&self, digits: usize) -> String {
        let mut out = format!(
            "| Model | {} |\n|---|---:|---:|---:|---:|\n",
            COLUMNS.join(" | ")
        );
        for r in &self.rows {
            let cells: Vec<String> = r
                .values
                .iter()
                .zip(r.best)
                .map(|(v, best)| {
                    let s = format!("{v:.digits$}");
                    if best {
                        format!("**{s}**")
                    } else {
                        s
                    }
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", r.model_name, cells.join(" | "));
        }
        out
    }

    /// Delimiter-separated table with a trailing `best` column listing the
    /// columns where the row is best.
    pub fn to_delimited(&self, delimiter: char, digits: usize) -> String {
        let d = delimiter.to_string();
        let mut out = format!("Model{d}{}{d}Best\n", COLUMNS.join(&d));
        for r in &self.rows {
            let values: Vec<String> = r.values.iter().map(|v| format!("{v:.digits$}")).collect();
            let best: Vec<&str> = COLUMNS
                .iter()
                .zip(r.best)
                .filter(|(_, b)| *b)
                .map(|(c, _)| *c)
                .collect();
            let _ = writeln!(
                out,
                "{}{d}{}{d}{}",
                r.model_name,
                values.join(&d),
                best.join(";")
            );
        }
        out
    }
}
