//! Binary relevance classifiers behind one interface.
//!
//! Three backends: a monolingual transformer (BERT family), a multilingual
//! transformer (XLM-RoBERTa family) and a custom embedding + LSTM network.
//! All of them emit one logit per post, train with binary cross-entropy under
//! Adam, and score posts with the sigmoid of that logit.

mod encoder;
mod init;
pub mod lstm;
pub mod resolver;
pub mod transformer;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, CorpusError};
use crate::fusion::{FusionError, PosteriorScores};

pub use lstm::Vocabulary;
pub use resolver::{CacheResolver, CheckpointFiles, CheckpointResolver, CACHE_ENV};
pub use transformer::{write_standin_checkpoint, StandinSize};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid backend spec: {0}")]
    Validation(String),
    #[error("cannot resolve checkpoint {checkpoint_id:?}: {reason}")]
    CheckpointResolution {
        checkpoint_id: String,
        reason: String,
    },
    #[error("cannot load checkpoint: {0}")]
    CheckpointLoad(String),
    #[error("tokenizer: {0}")]
    Tokenizer(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("model is not trained")]
    Untrained,
    #[error("model produced a non-finite score for post {0:?}")]
    NonFinite(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Scores(#[from] FusionError),
    #[error("tensor: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = BackendError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    TransformerMono,
    TransformerMulti,
    LstmCustom,
}

impl BackendId {
    pub const ALL: [BackendId; 3] = [
        BackendId::TransformerMono,
        BackendId::TransformerMulti,
        BackendId::LstmCustom,
    ];

    /// Short model id used in score file names and fusion weights.
    pub fn short_name(self) -> &'static str {
        match self {
            BackendId::TransformerMono => "mono",
            BackendId::TransformerMulti => "multi",
            BackendId::LstmCustom => "lstm",
        }
    }

    pub fn is_transformer(self) -> bool {
        !matches!(self, BackendId::LstmCustom)
    }

    pub fn default_checkpoint(self) -> &'static str {
        match self {
            BackendId::TransformerMono => "bert-base-cased",
            BackendId::TransformerMulti => "xlm-roberta-base",
            BackendId::LstmCustom => "",
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendId::TransformerMono => "transformer_mono",
            BackendId::TransformerMulti => "transformer_multi",
            BackendId::LstmCustom => "lstm_custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_sequence_length: usize,
    pub seed: u64,
    pub lstm_units: usize,
    pub embedding_dim: usize,
    pub vocab_size: usize,
    /// Train only the classification head of a transformer backend.
    #[serde(default)]
    pub freeze_encoder: bool,
}

impl HyperParams {
    pub fn defaults_for(backend: BackendId) -> Self {
        let transformer = backend.is_transformer();
        Self {
            learning_rate: if transformer { 2e-5 } else { 1e-3 },
            epochs: if transformer { 3 } else { 10 },
            batch_size: if transformer { 16 } else { 32 },
            max_sequence_length: 128,
            seed: 0,
            lstm_units: 64,
            embedding_dim: 64,
            vocab_size: 5000,
            freeze_encoder: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(BackendError::Validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_sequence_length", self.max_sequence_length),
            ("lstm_units", self.lstm_units),
            ("embedding_dim", self.embedding_dim),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(BackendError::Validation(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 3 {
            return Err(BackendError::Validation(
                "vocab_size must leave room for <pad>, <unk> and one token".into(),
            ));
        }
        Ok(())
    }
}

/// Optional overrides on top of a backend's defaults, as written in config
/// files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParamOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_sequence_length: Option<usize>,
    pub seed: Option<u64>,
    pub lstm_units: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub vocab_size: Option<usize>,
    pub freeze_encoder: Option<bool>,
}

impl HyperParamOverrides {
    pub fn apply(&self, mut hp: HyperParams) -> HyperParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { hp.$f = v; })* };
        }
        set!(
            learning_rate,
            epochs,
            batch_size,
            max_sequence_length,
            seed,
            lstm_units,
            embedding_dim,
            vocab_size,
            freeze_encoder
        );
        hp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend_id: BackendId,
    pub checkpoint_id: String,
    pub hyperparams: HyperParams,
}

impl BackendSpec {
    /// Spec with default hyperparameters and checkpoint for `backend`.
    pub fn with_defaults(backend: BackendId) -> Self {
        Self {
            backend_id: backend,
            checkpoint_id: backend.default_checkpoint().to_string(),
            hyperparams: HyperParams::defaults_for(backend),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.backend_id.is_transformer(), self.checkpoint_id.is_empty()) {
            (true, true) => {
                return Err(BackendError::Validation(format!(
                    "{} needs a checkpoint_id",
                    self.backend_id
                )))
            }
            (false, false) => {
                return Err(BackendError::Validation(format!(
                    "{} takes no checkpoint_id, got {:?}",
                    self.backend_id, self.checkpoint_id
                )))
            }
            _ => {}
        }
        self.hyperparams.validate()
    }
}

/// What a concrete network has to provide to the shared training and
/// inference loops.
pub(crate) trait Network: Send + Sync {
    fn varmap(&self) -> &VarMap;
    /// Called once on the training texts before the first epoch.
    fn prepare(&mut self, train_texts: &[&str]) -> Result<()>;
    /// One logit per text, shape `[batch]`.
    fn logits(&self, texts: &[&str]) -> Result<Tensor>;
    fn trainable_vars(&self) -> Vec<Var>;
    /// Non-weight state that changes predictions (e.g. a vocabulary).
    fn fingerprint_extra(&self) -> Vec<u8>;
    fn as_lstm(&self) -> Option<&lstm::LstmNet> {
        None
    }
    fn as_lstm_mut(&mut self) -> Option<&mut lstm::LstmNet> {
        None
    }
}

/// A built classifier, trained or not.
pub struct Model {
    spec: BackendSpec,
    net: Box<dyn Network>,
    training_log: Vec<f64>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("trained", &self.is_trained())
            .finish()
    }
}

/// Builds an untrained model. Custom layers are initialized from the spec
/// seed; transformer encoders load their checkpoint through `resolver`.
pub fn build(spec: &BackendSpec, resolver: &dyn CheckpointResolver) -> Result<Model> {
    spec.validate()?;
    let net: Box<dyn Network> = match spec.backend_id {
        BackendId::LstmCustom => Box::new(lstm::LstmNet::new(&spec.hyperparams)?),
        backend => {
            let files = resolver.resolve(&spec.checkpoint_id)?;
            Box::new(transformer::TransformerNet::new(
                backend,
                &spec.hyperparams,
                &files,
            )?)
        }
    };
    Ok(Model {
        spec: spec.clone(),
        net,
        training_log: Vec::new(),
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on logits, computed stably:
/// `max(x, 0) - x·y + ln(1 + e^{-|x|})`.
fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> candle_core::Result<Tensor> {
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    (logits.relu()? - logits.mul(targets)?)?
        .add(&softplus)?
        .mean_all()
}

fn label_tensor(labels: &[f32]) -> candle_core::Result<Tensor> {
    Tensor::from_slice(labels, labels.len(), &candle_core::Device::Cpu)
}

impl Model {
    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn backend_id(&self) -> BackendId {
        self.spec.backend_id
    }

    pub fn is_trained(&self) -> bool {
        !self.training_log.is_empty()
    }

    pub fn training_log(&self) -> &[f64] {
        &self.training_log
    }

    pub fn parameter_count(&self) -> usize {
        self.net
            .varmap()
            .all_vars()
            .iter()
            .map(|v| v.elem_count())
            .sum()
    }

    /// The fitted LSTM vocabulary, if this is the custom backend.
    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.net.as_lstm().and_then(|n| n.vocabulary())
    }

    /// SHA-256 over the spec, vocabulary and every weight in name order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.spec).expect("spec serializes"));
        h.update(self.net.fingerprint_extra());
        for (name, t) in init::sorted_vars(self.net.varmap()) {
            h.update(name.as_bytes());
            let values: Vec<f32> = t
                .flatten_all()
                .and_then(|t| t.to_dtype(DType::F32))
                .and_then(|t| t.to_vec1())
                .expect("weights are readable");
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Fits the model vocabulary (if any) to the texts without training.
    pub fn prepare(&mut self, corpus: &Corpus) -> Result<()> {
        self.net.prepare(&corpus.texts())
    }

    fn raw_scores(&self, texts: &[&str]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.spec.hyperparams.batch_size) {
            let logits: Vec<f32> = self.net.logits(chunk)?.to_vec1()?;
            out.extend(logits.into_iter().map(|x| sigmoid(x as f64)));
        }
        Ok(out)
    }

    /// Mean binary cross-entropy of the current weights over a labeled corpus.
    pub fn evaluate_loss(&self, corpus: &Corpus) -> Result<f64> {
        let labels: Vec<f32> = corpus.labels()?.iter().map(|l| l.as_f32()).collect();
        let texts = corpus.texts();
        if texts.is_empty() {
            return Err(BackendError::Argument("cannot evaluate on an empty corpus".into()));
        }
        let bs = self.spec.hyperparams.batch_size;
        let mut total = 0.0;
        for (t, y) in texts.chunks(bs).zip(labels.chunks(bs)) {
            let logits = self.net.logits(t)?;
            let loss: f32 = bce_with_logits(&logits, &label_tensor(y)?)?.to_scalar()?;
            total += loss as f64 * t.len() as f64;
        }
        Ok(total / texts.len() as f64)
    }

    /// Runs `epochs` passes of mini-batch Adam on binary cross-entropy.
    /// Batches are reshuffled every epoch from the spec seed.
    fn fit(&mut self, corpus: &Corpus) -> Result<()> {
        let hp = self.spec.hyperparams.clone();
        if corpus.is_empty() {
            return Err(BackendError::Argument("cannot train on an empty corpus".into()));
        }
        let labels: Vec<f32> = corpus.labels()?.iter().map(|l| l.as_f32()).collect();
        let texts = corpus.texts();
        self.net.prepare(&texts)?;

        let params = ParamsAdamW {
            lr: hp.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut opt = AdamW::new(self.net.trainable_vars(), params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
        let mut order: Vec<usize> = (0..texts.len()).collect();
        let mut log = Vec::with_capacity(hp.epochs);

        for epoch in 1..=hp.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(hp.batch_size) {
                let bt: Vec<&str> = batch.iter().map(|&i| texts[i]).collect();
                let by: Vec<f32> = batch.iter().map(|&i| labels[i]).collect();
                let logits = self.net.logits(&bt)?;
                let loss = bce_with_logits(&logits, &label_tensor(&by)?)?;
                let value: f32 = loss.to_scalar()?;
                if !value.is_finite() {
                    return Err(BackendError::Divergence { epoch });
                }
                opt.backward_step(&loss)?;
                total += value as f64 * batch.len() as f64;
            }
            let mean = total / texts.len() as f64;
            log::debug!("{} epoch {epoch}: loss {mean:.6}", self.spec.backend_id);
            log.push(mean);
        }
        self.training_log = log;
        Ok(())
    }

    /// `P(relevant | text)` for every post, in corpus order.
    pub fn predict_proba(&self, corpus: &Corpus) -> Result<PosteriorScores> {
        if !self.is_trained() {
            return Err(BackendError::Untrained);
        }
        let scores = self.raw_scores(&corpus.texts())?;
        let mut entries = Vec::with_capacity(scores.len());
        for (post, s) in corpus.posts().iter().zip(scores) {
            if !s.is_finite() {
                return Err(BackendError::NonFinite(post.post_id.clone()));
            }
            entries.push((post.post_id.clone(), s));
        }
        Ok(PosteriorScores::new(self.spec.backend_id.short_name(), entries)?)
    }
}

/// A model after training, with its per-epoch mean loss and fingerprint.
#[derive(Debug)]
pub struct TrainedModel {
    pub backend_id: BackendId,
    pub fingerprint: String,
    pub training_log: Vec<f64>,
    model: Model,
}

impl TrainedModel {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.model.spec
    }

    pub fn predict_proba(&self, corpus: &Corpus) -> Result<PosteriorScores> {
        self.model.predict_proba(corpus)
    }
}

pub fn train(mut model: Model, corpus: &Corpus) -> Result<TrainedModel> {
    model.fit(corpus)?;
    Ok(TrainedModel {
        backend_id: model.backend_id(),
        fingerprint: model.fingerprint(),
        training_log: model.training_log.clone(),
        model,
    })
}

pub fn predict_proba(model: &TrainedModel, corpus: &Corpus) -> Result<PosteriorScores> {
    model.predict_proba(corpus)
}

pub const MODEL_WEIGHTS_FILE: &str = "weights.safetensors";
pub const MODEL_SPEC_FILE: &str = "spec.json";
pub const MODEL_LOG_FILE: &str = "training_log.csv";
pub const MODEL_VOCAB_FILE: &str = "vocab.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BackendError + '_ {
    move |source| BackendError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl TrainedModel {
    /// Persists weights, a spec echo, the training log (`epoch,loss`) and,
    /// for the LSTM, its vocabulary. Returns the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let weights = dir.join(MODEL_WEIGHTS_FILE);
        self.model.net.varmap().save(&weights)?;

        let spec = dir.join(MODEL_SPEC_FILE);
        let spec_json = serde_json::to_string_pretty(self.spec()).expect("spec serializes");
        fs::write(&spec, spec_json).map_err(io_err(&spec))?;

        let log_path = dir.join(MODEL_LOG_FILE);
        let mut f = fs::File::create(&log_path).map_err(io_err(&log_path))?;
        let mut text = String::from("epoch,loss\n");
        for (i, loss) in self.training_log.iter().enumerate() {
            text.push_str(&format!("{},{loss}\n", i + 1));
        }
        f.write_all(text.as_bytes()).map_err(io_err(&log_path))?;

        let mut written = vec![weights, spec, log_path];
        if let Some(vocab) = self.model.vocabulary() {
            let vp = dir.join(MODEL_VOCAB_FILE);
            fs::write(&vp, serde_json::to_string(vocab).expect("vocab serializes"))
                .map_err(io_err(&vp))?;
            written.push(vp);
        }
        Ok(written)
    }

    /// Restores a model written by [`TrainedModel::save`].
    pub fn load(dir: &Path, resolver: &dyn CheckpointResolver) -> Result<TrainedModel> {
        let spec_path = dir.join(MODEL_SPEC_FILE);
        let spec_text = fs::read_to_string(&spec_path).map_err(io_err(&spec_path))?;
        let spec: BackendSpec = serde_json::from_str(&spec_text)
            .map_err(|e| BackendError::Validation(format!("{}: {e}", spec_path.display())))?;
        let mut model = build(&spec, resolver)?;

        if let Some(net) = model.net.as_lstm_mut() {
            let vp = dir.join(MODEL_VOCAB_FILE);
            let text = fs::read_to_string(&vp).map_err(io_err(&vp))?;
            let vocab: Vocabulary = serde_json::from_str(&text)
                .map_err(|e| BackendError::Validation(format!("{}: {e}", vp.display())))?;
            net.set_vocabulary(vocab);
        }
        let weights = dir.join(MODEL_WEIGHTS_FILE);
        let stored = candle_core::safetensors::load(&weights, &candle_core::Device::Cpu)?;
        {
            let data = model.net.varmap().data().lock().unwrap();
            for (name, var) in data.iter() {
                let t = stored.get(name).ok_or_else(|| {
                    BackendError::CheckpointLoad(format!("{}: missing {name:?}", weights.display()))
                })?;
                var.set(t)?;
            }
        }

        let log_path = dir.join(MODEL_LOG_FILE);
        let log_text = fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
        model.training_log = log_text
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').nth(1))
            .filter_map(|v| v.trim().parse().ok())
            .collect();
        Ok(TrainedModel {
            backend_id: spec.backend_id,
            fingerprint: model.fingerprint(),
            training_log: model.training_log.clone(),
            model,
        })
    }
}
