//! End-to-end run driven by one TOML file. Stages run in a fixed order;
//! each writes into its own directory under the output root together with
//! a `stage.json` record. A stage whose input fingerprint matches the
//! recorded one, and whose recorded files are intact, is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use crimeclass_baselines::{BaselineConfig, BaselineKind};
use crimeclass_classifiers::grid::Grid;
use crimeclass_classifiers::{lookup, ModelSpec, TrainingConfig};
use crimeclass_core::anonymizer::AnonymizerConfig;
use crimeclass_core::augmenter::AugmenterConfig;
use crimeclass_core::corpus::{read_complaints, write_complaints, IngestConfig};
use crimeclass_core::fingerprint::{combine, json_fingerprint, sha256_file};
use crimeclass_core::DropList;
use serde::{Deserialize, Serialize};

use crate::commands::{self, GeneratorSettings, Partition, SplitSettings, TargetSettings, COMPLAINTS_FILE, REPORT_FILE};

/// Bumped when a stage's output format or semantics change, so old
/// artifacts are not reused.
pub const PIPELINE_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STAGE_FILE: &str = "stage.json";
const TEST_FILE: &str = "test.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub run: RunSection,
    pub data: DataSection,
    #[serde(default)]
    pub anonymizer: AnonymizerConfig,
    #[serde(default)]
    pub augment: AugmentSection,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub baselines: BaselineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("artifacts"),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub input: PathBuf,
    /// Separate test file; without it `test_fraction` of each class is held
    /// out.
    #[serde(default)]
    pub test_input: Option<PathBuf>,
    #[serde(default = "default_text_column")]
    pub text_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "DropList::reference")]
    pub drop_list: DropList,
}

fn default_text_column() -> String {
    "text".into()
}
fn default_label_column() -> String {
    "label".into()
}
fn default_delimiter() -> char {
    ','
}
fn default_validation_fraction() -> f64 {
    SplitSettings::default().validation_fraction
}
fn default_test_fraction() -> f64 {
    SplitSettings::default().test_fraction
}

impl DataSection {
    pub fn ingest_config(&self) -> Result<IngestConfig> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be a single ASCII character");
        }
        Ok(IngestConfig {
            text_column: self.text_column.clone(),
            label_column: self.label_column.clone(),
            id_column: self.id_column.clone(),
            delimiter: self.delimiter as u8,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub enabled: bool,
    pub generator: GeneratorSettings,
    pub targets: TargetSettings,
    pub options: AugmenterConfig,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            enabled: true,
            generator: GeneratorSettings::default(),
            targets: TargetSettings::default(),
            options: AugmenterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Registry name: bert, roberta, hingbert or hingroberta.
    pub name: String,
    /// Use the desk-scale stand-in instead of pretrained weights.
    #[serde(default)]
    pub smoke: bool,
    /// Directory with the published checkpoint, required unless `smoke`.
    #[serde(default)]
    pub pretrained_dir: Option<PathBuf>,
    #[serde(default = "default_length")]
    pub max_sequence_length: usize,
    /// Run a grid search instead of a single training run.
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default = "one")]
    pub grid_workers: usize,
}

fn default_length() -> usize {
    128
}
fn one() -> usize {
    1
}

impl ModelSection {
    pub fn spec(&self) -> Result<ModelSpec> {
        let base = lookup(&self.name).with_context(|| format!("unknown model name {:?}", self.name))?;
        let spec = base.with_max_sequence_length(self.max_sequence_length);
        let spec = if self.smoke { spec.smoke() } else { spec };
        spec.validate().map_err(anyhow::Error::msg)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kinds: Vec<BaselineKind>,
    pub options: BaselineConfig,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            kinds: BaselineKind::ALL.to_vec(),
            options: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Schema(String),
    #[error("stage {stage} failed: {source:#}")]
    Stage { stage: &'static str, source: anyhow::Error },
    #[error("{0:#}")]
    Io(anyhow::Error),
}

impl PipelineConfig {
    /// Parse and validate; nothing runs on failure.
    pub fn from_toml(raw: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(raw).map_err(|e| PipelineError::Schema(e.to_string()))?;
        config.validate().map_err(|e| PipelineError::Schema(format!("{e:#}")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| PipelineError::Schema(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&raw)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.spec()?;
        if !self.model.smoke && self.model.pretrained_dir.is_none() {
            bail!("model.pretrained_dir is required unless model.smoke is set");
        }
        self.training.validate().map_err(anyhow::Error::msg)?;
        if let Some(grid) = &self.model.grid {
            if grid.points(self.model.max_sequence_length).is_empty() {
                bail!("model.grid has no points");
            }
            for lr in &grid.learning_rates {
                TrainingConfig {
                    learning_rate: *lr,
                    ..self.training.clone()
                }
                .validate()
                .map_err(anyhow::Error::msg)?;
            }
        }
        self.data.ingest_config()?;
        for (name, f) in [
            ("validation_fraction", self.data.validation_fraction),
            ("test_fraction", self.data.test_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                bail!("data.{name} must be in (0, 1), got {f}");
            }
        }
        self.augment.options.gate.validate().map_err(anyhow::Error::msg)?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run.output_dir);
        fix(&mut self.data.input);
        if let Some(t) = self.data.test_input.as_mut() {
            fix(t);
        }
        if let Some(d) = self.model.pretrained_dir.as_mut() {
            fix(d);
        }
        if let TargetSettings::File { path } = &mut self.augment.targets {
            fix(path);
        }
    }

    /// A complete config with every default spelled out, for reference.
    pub fn example() -> Self {
        Self {
            run: RunSection::default(),
            data: DataSection {
                input: PathBuf::from("complaints.csv"),
                test_input: None,
                text_column: default_text_column(),
                label_column: default_label_column(),
                id_column: None,
                delimiter: default_delimiter(),
                validation_fraction: default_validation_fraction(),
                test_fraction: default_test_fraction(),
                drop_list: DropList::reference(),
            },
            anonymizer: AnonymizerConfig::default(),
            augment: AugmentSection::default(),
            model: ModelSection {
                name: "hingroberta".into(),
                smoke: false,
                pretrained_dir: Some(PathBuf::from("checkpoints/hing-roberta")),
                max_sequence_length: default_length(),
                grid: Some(Grid::default()),
                grid_workers: 1,
            },
            training: TrainingConfig::default(),
            baselines: BaselineSection::default(),
        }
    }
}

/// What a finished stage left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub input_fingerprint: String,
    pub output_fingerprint: String,
    /// Relative path → sha256 for every file the stage wrote.
    pub files: BTreeMap<String, String>,
    pub report: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub status: StageStatus,
    pub input_fingerprint: String,
    pub output_fingerprint: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pipeline_version: String,
    pub tool_version: String,
    pub config_fingerprint: String,
    pub config: PipelineConfig,
    /// Input file → sha256.
    pub data: BTreeMap<String, String>,
    pub model: ModelSpec,
    pub stages: Vec<StageEntry>,
    pub started_at: chrono::DateTime<chrono::Utc>,
    pub finished_at: chrono::DateTime<chrono::Utc>,
}

fn hash_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if path.file_name() != Some(STAGE_FILE.as_ref()) {
                let rel = path.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_file(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

fn files_fingerprint(files: &BTreeMap<String, String>) -> String {
    let parts: Vec<(&str, &str)> = files.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    combine(&parts)
}

/// A reusable earlier result, if its record matches and its files are
/// unchanged.
fn reusable(dir: &Path, input_fingerprint: &str) -> Option<StageRecord> {
    let record: StageRecord = commands::read_json(&dir.join(STAGE_FILE)).ok()?;
    if record.input_fingerprint != input_fingerprint {
        return None;
    }
    let files = hash_tree(dir).ok()?;
    (files == record.files).then_some(record)
}

pub struct Pipeline {
    config: PipelineConfig,
    root: PathBuf,
    entries: Vec<StageEntry>,
}

/// Outcome of a full run.
#[derive(Debug)]
pub struct RunSummary {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn all_skipped(&self) -> bool {
        self.manifest.stages.iter().all(|s| s.status == StageStatus::Skipped)
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let root = config.run.output_dir.clone();
        Self {
            config,
            root,
            entries: Vec::new(),
        }
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    /// Run `body` into a scratch directory and publish it only on success,
    /// so a failure leaves the previous artifacts of this stage in place.
    fn stage(
        &mut self,
        stage: &'static str,
        parts: &[(&str, &str)],
        body: impl FnOnce(&Path) -> Result<serde_json::Value>,
    ) -> Result<StageRecord, PipelineError> {
        let mut all = vec![("pipeline_version", PIPELINE_VERSION), ("stage", stage)];
        all.extend_from_slice(parts);
        let input_fingerprint = combine(&all);
        let dir = self.dir(stage);
        let started = Instant::now();
        if let Some(record) = reusable(&dir, &input_fingerprint) {
            log::info!("stage {stage}: up to date, skipped");
            self.entries.push(StageEntry {
                stage: stage.into(),
                status: StageStatus::Skipped,
                input_fingerprint,
                output_fingerprint: record.output_fingerprint.clone(),
                seconds: 0.0,
            });
            return Ok(record);
        }
        log::info!("stage {stage}: running");
        let fail = |source: anyhow::Error| PipelineError::Stage { stage, source };
        let scratch = self.root.join(format!(".{stage}.partial"));
        if scratch.exists() {
            fs::remove_dir_all(&scratch).map_err(|e| fail(e.into()))?;
        }
        fs::create_dir_all(&scratch).map_err(|e| fail(e.into()))?;
        let report = match body(&scratch) {
            Ok(r) => r,
            Err(e) => {
                let _ = fs::remove_dir_all(&scratch);
                return Err(fail(e));
            }
        };
        let files = hash_tree(&scratch).map_err(fail)?;
        let record = StageRecord {
            stage: stage.into(),
            input_fingerprint: input_fingerprint.clone(),
            output_fingerprint: files_fingerprint(&files),
            files,
            report,
        };
        commands::write_json(&scratch.join(STAGE_FILE), &record).map_err(fail)?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| fail(e.into()))?;
        }
        fs::rename(&scratch, &dir).map_err(|e| fail(e.into()))?;
        self.entries.push(StageEntry {
            stage: stage.into(),
            status: StageStatus::Ran,
            input_fingerprint,
            output_fingerprint: record.output_fingerprint.clone(),
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(record)
    }

    pub fn run(mut self) -> Result<RunSummary, PipelineError> {
        let started_at = chrono::Utc::now();
        let cfg = self.config.clone();
        let root = self.root.clone();
        let spec = cfg.model.spec().map_err(|e| PipelineError::Schema(format!("{e:#}")))?;
        fs::create_dir_all(&root).map_err(|e| PipelineError::Io(e.into()))?;

        let mut data = BTreeMap::new();
        let input_sha = sha256_file(&cfg.data.input)
            .with_context(|| format!("reading {}", cfg.data.input.display()))
            .map_err(|source| PipelineError::Stage { stage: "ingest", source })?;
        data.insert(cfg.data.input.display().to_string(), input_sha.clone());
        let test_sha = match &cfg.data.test_input {
            Some(path) => {
                let sha = sha256_file(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(|source| PipelineError::Stage { stage: "ingest", source })?;
                data.insert(path.display().to_string(), sha.clone());
                sha
            }
            None => String::new(),
        };

        let ingest_cfg = cfg.data.ingest_config().map_err(|e| PipelineError::Schema(format!("{e:#}")))?;
        let ingest = self.stage(
            "ingest",
            &[("input", &input_sha), ("test_input", &test_sha), ("config", &json_fingerprint(&ingest_cfg))],
            |out| {
                let mut report = BTreeMap::new();
                report.insert("train", commands::ingest_to(&cfg.data.input, &ingest_cfg, &out.join(COMPLAINTS_FILE))?);
                if let Some(test) = &cfg.data.test_input {
                    // keep ids unique across the two files
                    let tmp = out.join("test.raw.csv");
                    report.insert("test", commands::ingest_to(test, &ingest_cfg, &tmp)?);
                    let mut items = read_complaints(&tmp)?;
                    for c in &mut items {
                        c.id = format!("test-{}", c.id);
                    }
                    write_complaints(&out.join(TEST_FILE), &items)?;
                    fs::remove_file(tmp)?;
                }
                Ok(serde_json::to_value(report)?)
            },
        )?;

        let has_test = cfg.data.test_input.is_some();
        let clean = self.stage(
            "clean",
            &[("upstream", &ingest.output_fingerprint), ("drop_list", &json_fingerprint(&cfg.data.drop_list))],
            |out| {
                let src = root.join("ingest");
                let mut report = BTreeMap::new();
                report.insert("train", commands::clean_to(&src.join(COMPLAINTS_FILE), &cfg.data.drop_list, &out.join(COMPLAINTS_FILE))?);
                if has_test {
                    report.insert("test", commands::clean_to(&src.join(TEST_FILE), &cfg.data.drop_list, &out.join(TEST_FILE))?);
                }
                Ok(serde_json::to_value(report)?)
            },
        )?;

        let anonymize = self.stage(
            "anonymize",
            &[("upstream", &clean.output_fingerprint), ("config", &json_fingerprint(&cfg.anonymizer))],
            |out| {
                let src = root.join("clean");
                let mut report = BTreeMap::new();
                report.insert("train", commands::anonymize_to(&src.join(COMPLAINTS_FILE), &cfg.anonymizer, &out.join(COMPLAINTS_FILE))?);
                if has_test {
                    report.insert("test", commands::anonymize_to(&src.join(TEST_FILE), &cfg.anonymizer, &out.join(TEST_FILE))?);
                }
                Ok(serde_json::to_value(report)?)
            },
        )?;

        let settings = SplitSettings {
            validation_fraction: cfg.data.validation_fraction,
            test_fraction: cfg.data.test_fraction,
            seed: cfg.run.seed,
        };
        let split = self.stage(
            "split",
            &[("upstream", &anonymize.output_fingerprint), ("config", &json_fingerprint(&settings))],
            |out| {
                let src = root.join("anonymize");
                let test = has_test.then(|| src.join(TEST_FILE));
                let summary = commands::split_to(&src.join(COMPLAINTS_FILE), test.as_deref(), settings, out)?;
                Ok(serde_json::to_value(summary)?)
            },
        )?;

        let augment = self.stage(
            "augment",
            &[("upstream", &split.output_fingerprint), ("config", &json_fingerprint(&cfg.augment))],
            |out| {
                let src = root.join("split");
                if !cfg.augment.enabled {
                    let data = crimeclass_core::DatasetSplit::load(&src)?;
                    data.save(out)?;
                    return Ok(serde_json::json!({"enabled": false}));
                }
                let report = commands::augment_to(&src, &cfg.augment.targets, &cfg.augment.generator, &cfg.augment.options, out)?;
                Ok(serde_json::to_value(report)?)
            },
        )?;
        let data_dir = root.join("augment");

        let pretrained_sha = match &cfg.model.pretrained_dir {
            Some(dir) if !cfg.model.smoke => json_fingerprint(&hash_tree(dir).map_err(|source| PipelineError::Stage { stage: "train", source })?),
            _ => String::new(),
        };
        let train = self.stage(
            "train",
            &[
                ("upstream", &augment.output_fingerprint),
                ("spec", &json_fingerprint(&spec)),
                ("training", &json_fingerprint(&cfg.training)),
                ("grid", &json_fingerprint(&cfg.model.grid)),
                ("pretrained", &pretrained_sha),
            ],
            |out| {
                let pretrained = cfg.model.pretrained_dir.as_deref().filter(|_| !cfg.model.smoke);
                match &cfg.model.grid {
                    Some(grid) => {
                        let summary = commands::grid_to(&data_dir, &spec, grid, &cfg.training, cfg.model.grid_workers, pretrained, out)?;
                        Ok(serde_json::json!({"best_config": summary.best_config, "best_point": summary.best_point}))
                    }
                    None => {
                        let history = commands::train_to(&data_dir, &spec, &cfg.training, pretrained, out)?;
                        Ok(serde_json::to_value(history)?)
                    }
                }
            },
        )?;

        let baselines = self.stage(
            "baselines",
            &[("upstream", &augment.output_fingerprint), ("config", &json_fingerprint(&cfg.baselines))],
            |out| {
                for kind in &cfg.baselines.kinds {
                    commands::baseline_to(&data_dir, *kind, &cfg.baselines.options, &out.join(kind.as_str()))?;
                }
                Ok(serde_json::json!({"kinds": cfg.baselines.kinds}))
            },
        )?;

        let transformer_name = if cfg.model.smoke { format!("{}-smoke", spec.name) } else { spec.name.clone() };
        let evaluate = self.stage(
            "evaluate",
            &[
                ("data", &augment.output_fingerprint),
                ("train", &train.output_fingerprint),
                ("baselines", &baselines.output_fingerprint),
            ],
            |out| {
                let mut models = vec![(transformer_name.clone(), root.join("train"))];
                for kind in &cfg.baselines.kinds {
                    models.push((kind.as_str().to_string(), root.join("baselines").join(kind.as_str())));
                }
                let mut summary = BTreeMap::new();
                for (name, dir) in models {
                    let report = commands::evaluate_model(&dir, &data_dir, Partition::Test, &name)?;
                    commands::write_report(&out.join(format!("{name}.json")), &report)?;
                    summary.insert(name, (report.aggregate.accuracy, report.weighted_avg.f1));
                }
                Ok(serde_json::to_value(summary)?)
            },
        )?;

        self.stage("compare", &[("upstream", &evaluate.output_fingerprint)], |out| {
            let eval_dir = root.join("evaluate");
            let mut reports: Vec<PathBuf> = fs::read_dir(&eval_dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name() != Some(STAGE_FILE.as_ref()))
                .collect();
            reports.sort();
            let (table, md, csv) = commands::compare_reports(&reports, 4)?;
            fs::write(out.join("comparison.md"), &md)?;
            fs::write(out.join("comparison.csv"), &csv)?;
            commands::write_json(&out.join(REPORT_FILE), &table)?;
            Ok(serde_json::to_value(&table)?)
        })?;

        let manifest = Manifest {
            pipeline_version: PIPELINE_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_fingerprint: json_fingerprint(&cfg),
            config: cfg,
            data,
            model: spec,
            stages: self.entries,
            started_at,
            finished_at: chrono::Utc::now(),
        };
        commands::write_json(&root.join(MANIFEST_FILE), &manifest).map_err(PipelineError::Io)?;
        Ok(RunSummary {
            root,
            manifest,
        })
    }
}
