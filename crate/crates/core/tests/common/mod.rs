#![allow(dead_code)]

use std::path::{Path, PathBuf};

use aquasift::backends::{write_standin_checkpoint, BackendId, CacheResolver, StandinSize};
use aquasift::corpus::generate_synthetic;
use aquasift::runner::{DataConfig, FusionMode, FusionSettings, RunConfig, RunId};
use aquasift::Cleaner;

pub const CORPUS_SEED: u64 = 2021;
pub const RUN_SEED: u64 = 7;

/// Writes the 500-post synthetic corpus (30% relevant) and returns its path.
pub fn write_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    generate_synthetic(500, 0.3, CORPUS_SEED)
        .unwrap()
        .corpus
        .write_jsonl(&path)
        .unwrap();
    path
}

pub fn data(train: &Path) -> DataConfig {
    DataConfig {
        train: train.to_path_buf(),
        validation: None,
        test: None,
        validation_size: Some(80),
        test_size: Some(100),
        stratified: true,
        format: None,
    }
}

pub fn resolver(dir: &Path) -> CacheResolver {
    CacheResolver::new(dir.join("cache"))
}

/// Stand-in checkpoints for both transformer backends, with vocabularies
/// fitted on the cleaned corpus.
pub fn write_standins(dir: &Path, corpus: &Path) -> (String, String) {
    let raw = aquasift::ingest(corpus, aquasift::Format::Jsonl, aquasift::Role::Train).unwrap();
    let cleaned = Cleaner::default().clean_corpus(&raw).corpus;
    let texts = cleaned.texts();
    let mut ids = Vec::new();
    for backend in [BackendId::TransformerMono, BackendId::TransformerMulti] {
        let ckpt = dir.join("cache").join(format!("standin-{}", backend.short_name()));
        write_standin_checkpoint(&ckpt, backend, &texts, StandinSize::default(), 11).unwrap();
        ids.push(format!("standin-{}", backend.short_name()));
    }
    (ids[0].clone(), ids[1].clone())
}

pub fn single_config(run_id: RunId, dir: &Path, corpus: &Path, out: &str) -> RunConfig {
    let mut c = RunConfig::new(run_id, data(corpus), dir.join(out), RUN_SEED);
    tune(&mut c);
    c
}

pub fn fusion_config(dir: &Path, corpus: &Path, out: &str, mode: FusionMode) -> RunConfig {
    let mut c = RunConfig::new(RunId::Run1Fusion, data(corpus), dir.join(out), RUN_SEED);
    c.fusion = Some(FusionSettings {
        mode,
        ..FusionSettings::default()
    });
    tune(&mut c);
    c
}

/// Stand-in transformers start from random weights, so they need a larger
/// step size and more epochs than pretrained encoders.
fn tune(c: &mut RunConfig) {
    for spec in &mut c.backends {
        match spec.backend_id {
            BackendId::TransformerMono => spec.checkpoint_id = "standin-mono".into(),
            BackendId::TransformerMulti => spec.checkpoint_id = "standin-multi".into(),
            BackendId::LstmCustom => {}
        }
        if spec.backend_id.is_transformer() {
            spec.hyperparams.learning_rate = 1e-3;
            spec.hyperparams.epochs = 4;
            spec.hyperparams.max_sequence_length = 48;
        }
    }
}
