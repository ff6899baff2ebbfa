//! End-to-end runs: ingest, clean, balance, train, score, fuse, decide,
//! evaluate, persist.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ConfigError, DataConfig, FusionMode, FusionSettings, Overrides, RunConfig, RunId};

use crate::backends::{self, BackendId, BackendSpec, CheckpointResolver, TrainedModel};
use crate::corpus::{self, ClassCounts, Corpus, Format, Label, Role};
use crate::fusion::{self, FusionConfig, PosteriorScores};
use crate::metrics::{self, MetricsReport};
use crate::textprep::{CleanReport, Cleaner};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MODELS_DIR: &str = "models";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Clean,
    Balance,
    Train,
    Score,
    Fuse,
    Decide,
    Evaluate,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct RunError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl RunError {
    fn at<E: Into<Box<dyn std::error::Error + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> Self {
        move |e| RunError {
            stage,
            source: e.into(),
        }
    }
}

fn io_at(stage: Stage, path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError {
        stage,
        source: format!("{}: {e}", path.display()).into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub backend_id: BackendId,
    pub model_id: String,
    pub fingerprint: String,
    pub parameter_count: usize,
    pub training_log: Vec<f64>,
    /// Artifact paths relative to the output directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: ClassCounts,
    pub train_balanced: ClassCounts,
    pub validation: ClassCounts,
    pub test: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Everything a run produced, written last as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: RunId,
    pub config: RunConfig,
    pub splits: SplitSummary,
    pub cleaning: BTreeMap<String, CleanReport>,
    pub models: Vec<ModelEntry>,
    /// Normalized fusion weights, fusion run only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_weights: Option<BTreeMap<String, f64>>,
    pub threshold: f64,
    pub timings: Vec<StageTiming>,
    pub total_seconds: f64,
    /// Output files relative to the output directory, `manifest.json` included.
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_at(Stage::Persist, path))?;
        serde_json::from_str(&text).map_err(|e| RunError {
            stage: Stage::Persist,
            source: format!("{}: {e}", path.display()).into(),
        })
    }
}

/// Contents of `metrics.json` and `metrics_<model>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub model_id: String,
    pub test: MetricsReport,
    pub validation: MetricsReport,
    pub note: String,
}

struct Timer {
    timings: Vec<StageTiming>,
    start: Instant,
    current: Option<(Stage, Instant)>,
}

impl Timer {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            start: Instant::now(),
            current: None,
        }
    }

    fn enter(&mut self, stage: Stage) {
        self.close();
        log::info!("stage {stage}");
        self.current = Some((stage, Instant::now()));
    }

    fn close(&mut self) {
        if let Some((stage, t)) = self.current.take() {
            self.timings.push(StageTiming {
                stage,
                seconds: t.elapsed().as_secs_f64(),
            });
        }
    }
}

fn load_split(path: &Path, format: Option<Format>, role: Role) -> Result<Corpus, RunError> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    corpus::ingest(path, format, role).map_err(RunError::at(Stage::Ingest))
}

/// Returns (train, validation, test) before cleaning.
fn ingest_splits(config: &RunConfig) -> Result<(Corpus, Corpus, Corpus), RunError> {
    let d = &config.data;
    let full = load_split(&d.train, d.format, Role::Train)?;

    let (rest, test) = match &d.test {
        Some(p) => (full, load_split(p, d.format, Role::Test)?),
        None => {
            let n = d.test_size.ok_or_else(|| RunError {
                stage: Stage::Ingest,
                source: "data needs either `test` or `test_size`".into(),
            })?;
            let (rest, test) = corpus::split(&full, n, config.seed, d.stratified)
                .map_err(RunError::at(Stage::Ingest))?;
            let test = test.with_role(Role::Test).map_err(RunError::at(Stage::Ingest))?;
            (rest, test)
        }
    };

    let (train, validation) = match &d.validation {
        Some(p) => (rest, load_split(p, d.format, Role::Validation)?),
        None => {
            let n = d
                .validation_size
                .unwrap_or_else(|| ((rest.len() as f64) * 0.2).round().max(1.0) as usize);
            corpus::split(&rest, n, config.seed.wrapping_add(1), d.stratified)
                .map_err(RunError::at(Stage::Ingest))?
        }
    };
    let train = train.with_role(Role::Train).map_err(RunError::at(Stage::Ingest))?;
    let validation = validation
        .with_role(Role::Validation)
        .map_err(RunError::at(Stage::Ingest))?;
    Ok((train, validation, test))
}

fn train_one(
    spec: &BackendSpec,
    train: &Corpus,
    resolver: &dyn CheckpointResolver,
) -> Result<TrainedModel, RunError> {
    let model = backends::build(spec, resolver).map_err(RunError::at(Stage::Train))?;
    log::info!(
        "training {} ({} parameters) on {} posts",
        spec.backend_id,
        model.parameter_count(),
        train.len()
    );
    backends::train(model, train).map_err(RunError::at(Stage::Train))
}

fn evaluate(pred: &[(String, Label)], gold: &Corpus) -> Result<MetricsReport, RunError> {
    let gold = gold.gold().map_err(RunError::at(Stage::Evaluate))?;
    let pred = pred.iter().cloned().collect();
    let matrix = metrics::confusion(&pred, &gold).map_err(RunError::at(Stage::Evaluate))?;
    metrics::report(matrix).map_err(RunError::at(Stage::Evaluate))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(io_at(Stage::Persist, path))
}

fn count(c: &Corpus) -> Result<ClassCounts, RunError> {
    corpus::count_classes(c).map_err(RunError::at(Stage::Ingest))
}

/// Runs the whole pipeline and writes every artifact under
/// `config.out_dir`. Artifacts written before a failure are left in place.
pub fn execute(config: &RunConfig, resolver: &dyn CheckpointResolver) -> Result<RunManifest, RunError> {
    config.validate().map_err(RunError::at(Stage::Ingest))?;
    let out = &config.out_dir;
    let mut timer = Timer::new();
    let mut files: Vec<String> = Vec::new();

    timer.enter(Stage::Ingest);
    fs::create_dir_all(out).map_err(io_at(Stage::Ingest, out))?;
    let (train, validation, test) = ingest_splits(config)?;
    let test_counts = count(&test)?;
    let validation_counts = count(&validation)?;
    let train_counts = count(&train)?;

    timer.enter(Stage::Clean);
    let cleaner = Cleaner::new(config.clean.clone());
    let mut cleaning = BTreeMap::new();
    let mut clean_split = |name: &str, c: &Corpus| {
        let cleaned = cleaner.clean_corpus(c);
        if !cleaned.report.empty_post_ids.is_empty() {
            log::warn!(
                "{name}: {} posts are empty after cleaning",
                cleaned.report.empty_post_ids.len()
            );
        }
        cleaning.insert(name.to_string(), cleaned.report);
        cleaned.corpus
    };
    let train = clean_split("train", &train);
    let validation = clean_split("validation", &validation);
    let test = clean_split("test", &test);

    timer.enter(Stage::Balance);
    let train = corpus::upsample(&train, config.seed).map_err(RunError::at(Stage::Balance))?;
    let train_balanced = count(&train)?;

    timer.enter(Stage::Train);
    let trained: Vec<TrainedModel> = if config.backends.len() == 1 {
        vec![train_one(&config.backends[0], &train, resolver)?]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = config
                .backends
                .iter()
                .map(|spec| s.spawn(|| train_one(spec, &train, resolver)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?
    };
    let mut models = Vec::new();
    for tm in &trained {
        let short = tm.backend_id.short_name();
        let dir = out.join(MODELS_DIR).join(short);
        let written = tm.save(&dir).map_err(RunError::at(Stage::Train))?;
        models.push(ModelEntry {
            backend_id: tm.backend_id,
            model_id: short.to_string(),
            fingerprint: tm.fingerprint.clone(),
            parameter_count: tm.model().parameter_count(),
            training_log: tm.training_log.clone(),
            artifacts: written
                .iter()
                .map(|p| relative(out, p))
                .collect(),
        });
    }

    timer.enter(Stage::Score);
    let mut val_scores = Vec::new();
    let mut test_scores = Vec::new();
    for tm in &trained {
        let short = tm.backend_id.short_name();
        let v = tm
            .predict_proba(&validation)
            .map_err(RunError::at(Stage::Score))?
            .with_model_id(short);
        let t = tm
            .predict_proba(&test)
            .map_err(RunError::at(Stage::Score))?
            .with_model_id(short);
        let name = format!("scores_{short}.csv");
        t.write_csv(&out.join(&name)).map_err(RunError::at(Stage::Score))?;
        files.push(name);
        val_scores.push(v);
        test_scores.push(t);
    }

    let threshold = config.decision_threshold();
    let (final_val, final_test, fusion_weights) = match &config.fusion {
        None => (val_scores.remove(0), test_scores.remove(0), None),
        Some(settings) => {
            timer.enter(Stage::Fuse);
            let mut per_model = BTreeMap::new();
            for (v, t) in val_scores.iter().zip(&test_scores) {
                let vr = evaluate(&fusion::decide(v, threshold), &validation)?;
                let tr = evaluate(&fusion::decide(t, threshold), &test)?;
                let name = format!("metrics_{}.json", v.model_id());
                write_json(
                    &out.join(&name),
                    &MetricsFile {
                        model_id: v.model_id().to_string(),
                        test: tr,
                        validation: vr.clone(),
                        note: metrics::FLAVOR_NOTE.to_string(),
                    },
                )?;
                files.push(name);
                per_model.insert(v.model_id().to_string(), vr);
            }
            let fcfg = match settings.mode {
                FusionMode::Equal => {
                    FusionConfig::equal(val_scores.iter().map(|s| s.model_id().to_string()))
                }
                FusionMode::Merit => {
                    fusion::merit_weights(&per_model).map_err(RunError::at(Stage::Fuse))?
                }
                FusionMode::Weights => {
                    FusionConfig::weighted(settings.weights.clone().unwrap_or_default())
                }
            };
            let fcfg = FusionConfig {
                threshold: settings.threshold,
                ..fcfg
            };
            let fv = fusion::fuse(&val_scores, &fcfg).map_err(RunError::at(Stage::Fuse))?;
            let ft = fusion::fuse(&test_scores, &fcfg).map_err(RunError::at(Stage::Fuse))?;
            let name = format!("scores_{}.csv", fusion::FUSION_MODEL_ID);
            ft.write_csv(&out.join(&name)).map_err(RunError::at(Stage::Fuse))?;
            files.push(name);
            let weights = fcfg.normalized().map_err(RunError::at(Stage::Fuse))?;
            (fv, ft, Some(weights))
        }
    };

    timer.enter(Stage::Decide);
    let val_pred = fusion::decide(&final_val, threshold);
    let test_pred = fusion::decide(&final_test, threshold);
    fusion::write_predictions(&out.join(PREDICTIONS_FILE), &test_pred)
        .map_err(RunError::at(Stage::Decide))?;
    files.push(PREDICTIONS_FILE.to_string());

    timer.enter(Stage::Evaluate);
    let metrics_file = MetricsFile {
        model_id: final_test.model_id().to_string(),
        test: evaluate(&test_pred, &test)?,
        validation: evaluate(&val_pred, &validation)?,
        note: metrics::FLAVOR_NOTE.to_string(),
    };
    log::info!(
        "test F1 {:.3}, accuracy {:.3}",
        metrics_file.test.positive_class.f1,
        metrics_file.test.accuracy
    );
    write_json(&out.join(METRICS_FILE), &metrics_file)?;
    files.push(METRICS_FILE.to_string());

    timer.enter(Stage::Persist);
    files.push(MANIFEST_FILE.to_string());
    timer.close();
    let manifest = RunManifest {
        run_id: config.run_id,
        config: config.clone(),
        splits: SplitSummary {
            train: train_counts,
            train_balanced,
            validation: validation_counts,
            test: test_counts,
        },
        cleaning,
        models,
        fusion_weights,
        threshold,
        total_seconds: timer.start.elapsed().as_secs_f64(),
        timings: timer.timings,
        files,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Reads the test metrics next to a manifest, if both exist.
pub fn load_run_metrics(manifest_path: &Path) -> Option<(RunManifest, MetricsFile)> {
    let manifest = RunManifest::load(manifest_path).ok()?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(dir.join(METRICS_FILE)).ok()?;
    let metrics = serde_json::from_str(&text).ok()?;
    Some((manifest, metrics))
}

/// Table of test metrics, one row per manifest. Unreadable manifests or
/// missing metrics show as incomplete rows.
pub fn compare(manifest_paths: &[PathBuf]) -> Result<String, RunError> {
    if manifest_paths.is_empty() {
        return Err(RunError {
            stage: Stage::Evaluate,
            source: "compare needs at least one manifest".into(),
        });
    }
    let loaded: Vec<(String, Option<MetricsReport>)> = manifest_paths
        .iter()
        .map(|p| match load_run_metrics(p) {
            Some((m, metrics)) => (m.run_id.to_string(), Some(metrics.test)),
            None => {
                let name = RunManifest::load(p)
                    .map(|m| m.run_id.to_string())
                    .unwrap_or_else(|_| p.display().to_string());
                (name, None)
            }
        })
        .collect();
    let rows: Vec<(String, Option<&MetricsReport>)> =
        loaded.iter().map(|(n, r)| (n.clone(), r.as_ref())).collect();
    Ok(metrics::render_table(&rows))
}

/// Scores read back from a run directory, keyed by model id.
pub fn read_scores(dir: &Path, model_id: &str) -> Result<PosteriorScores, RunError> {
    PosteriorScores::read_csv(&dir.join(format!("scores_{model_id}.csv")), model_id)
        .map_err(RunError::at(Stage::Score))
}
