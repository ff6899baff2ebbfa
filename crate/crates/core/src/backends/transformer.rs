//! Pretrained transformer encoders with a single-logit classification head.
//!
//! The monolingual backend runs a BERT encoder, the multilingual backend an
//! XLM-RoBERTa encoder. Both read the first token's final hidden state and
//! project it to one logit. Encoder weights come from a checkpoint
//! directory; the head is freshly initialized from the backend seed.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, IndexOp, Tensor, Var};
use candle_nn::{Linear, Module, VarBuilder, VarMap};
use serde_json::json;
use tokenizers::models::wordlevel::WordLevel;
use tokenizers::pre_tokenizers::whitespace::Whitespace;
use tokenizers::processors::template::TemplateProcessing;
use tokenizers::{PaddingParams, PaddingStrategy, Tokenizer, TruncationParams};

use super::encoder::{Encoder, EncoderConfig, Positions};
use super::init::{seeded_init, sorted_vars, Init};
use super::resolver::{CheckpointFiles, CONFIG_FILE, TOKENIZER_FILE, WEIGHTS_FILE};
use super::{BackendError, BackendId, HyperParams, Network};

const HEAD_PREFIX: &str = "classifier";

pub(crate) struct TransformerNet {
    varmap: VarMap,
    encoder: Encoder,
    head: Linear,
    tokenizer: Tokenizer,
    freeze_encoder: bool,
}

fn read_config(path: &Path) -> Result<EncoderConfig, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| checkpoint_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| checkpoint_err(path, e))
}

fn positions(backend: BackendId) -> Positions {
    match backend {
        BackendId::TransformerMulti => Positions::AfterPadding,
        _ => Positions::Absolute,
    }
}

/// Longest input, special tokens included, the position table allows.
fn max_positions(c: &EncoderConfig, backend: BackendId) -> usize {
    match positions(backend) {
        Positions::Absolute => c.max_position_embeddings,
        Positions::AfterPadding => c
            .max_position_embeddings
            .saturating_sub(c.pad_token_id as usize + 1),
    }
}

fn weight_prefix(backend: BackendId) -> &'static str {
    match backend {
        BackendId::TransformerMulti => "roberta",
        _ => "bert",
    }
}

/// Older checkpoints name layer-norm parameters `gamma` / `beta`.
fn legacy_name(name: &str) -> Option<String> {
    if !name.contains("LayerNorm.") {
        return None;
    }
    if let Some(stem) = name.strip_suffix(".weight") {
        Some(format!("{stem}.gamma"))
    } else {
        name.strip_suffix(".bias").map(|stem| format!("{stem}.beta"))
    }
}

fn checkpoint_err(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::CheckpointLoad(format!("{}: {e}", path.display()))
}

fn init_rule(name: &str, hidden: usize) -> Init {
    if name.ends_with("bias") || name.ends_with("beta") {
        Init::Zeros
    } else if name.contains("LayerNorm") || name.contains("layer_norm") {
        Init::Ones
    } else if name.starts_with(HEAD_PREFIX) {
        Init::Uniform((6.0 / (hidden as f32 + 1.0)).sqrt())
    } else {
        Init::Normal(0.02)
    }
}

impl TransformerNet {
    pub(crate) fn new(
        backend: BackendId,
        hp: &HyperParams,
        files: &CheckpointFiles,
    ) -> Result<Self, BackendError> {
        let device = Device::Cpu;
        let config = read_config(&files.config)?;

        let checkpoint = candle_core::safetensors::load(&files.weights, &device)
            .map_err(|e| checkpoint_err(&files.weights, e))?;
        let prefix = weight_prefix(backend);
        let prefixed = checkpoint
            .keys()
            .any(|k| k.starts_with(&format!("{prefix}.")));

        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let encoder_vb = if prefixed { vb.pp(prefix) } else { vb.clone() };
        let encoder = Encoder::new(&config, positions(backend), encoder_vb)?;
        let head = candle_nn::linear(config.hidden_size, 1, vb.pp(HEAD_PREFIX))?;

        let hidden = config.hidden_size;
        seeded_init(&varmap, hp.seed, |name, _| init_rule(name, hidden))?;
        {
            let data = varmap.data().lock().unwrap();
            for (name, var) in data.iter() {
                if name.starts_with(HEAD_PREFIX) {
                    continue;
                }
                let src = checkpoint
                    .get(name)
                    .or_else(|| legacy_name(name).and_then(|n| checkpoint.get(&n)))
                    .ok_or_else(|| {
                        checkpoint_err(&files.weights, format!("missing tensor {name:?}"))
                    })?;
                if src.dims() != var.dims() {
                    return Err(checkpoint_err(
                        &files.weights,
                        format!("tensor {name:?} has shape {:?}, expected {:?}", src.dims(), var.dims()),
                    ));
                }
                var.set(&src.to_dtype(DType::F32)?)?;
            }
        }

        let mut tokenizer =
            Tokenizer::from_file(&files.tokenizer).map_err(|e| checkpoint_err(&files.tokenizer, e))?;
        let pad_id = config.pad_token_id;
        let pad_token = tokenizer.id_to_token(pad_id).ok_or_else(|| {
            checkpoint_err(&files.tokenizer, format!("pad id {pad_id} not in vocabulary"))
        })?;
        let max_length = hp.max_sequence_length.min(max_positions(&config, backend));
        tokenizer
            .with_truncation(Some(TruncationParams {
                max_length,
                ..Default::default()
            }))
            .map_err(|e| checkpoint_err(&files.tokenizer, e))?;
        tokenizer.with_padding(Some(PaddingParams {
            strategy: PaddingStrategy::BatchLongest,
            pad_id,
            pad_token,
            ..Default::default()
        }));

        Ok(Self {
            varmap,
            encoder,
            head,
            tokenizer,
            freeze_encoder: hp.freeze_encoder,
        })
    }
}

impl Network for TransformerNet {
    fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    fn prepare(&mut self, _train_texts: &[&str]) -> Result<(), BackendError> {
        Ok(())
    }

    fn logits(&self, texts: &[&str]) -> Result<Tensor, BackendError> {
        let encodings = self
            .tokenizer
            .encode_batch(texts.to_vec(), true)
            .map_err(|e| BackendError::Tokenizer(e.to_string()))?;
        let batch = encodings.len();
        let steps = encodings.first().map(|e| e.get_ids().len()).unwrap_or(0);
        let mut ids = Vec::with_capacity(batch * steps);
        let mut mask = Vec::with_capacity(batch * steps);
        for enc in &encodings {
            ids.extend_from_slice(enc.get_ids());
            mask.extend_from_slice(enc.get_attention_mask());
        }
        let hidden = self.encoder.forward(&ids, &mask, batch, steps)?;
        let first = hidden.i((.., 0, ..))?;
        Ok(self.head.forward(&first)?.squeeze(1)?)
    }

    fn trainable_vars(&self) -> Vec<Var> {
        let data = self.varmap.data().lock().unwrap();
        let mut vars: Vec<(&String, &Var)> = data
            .iter()
            .filter(|(name, _)| !self.freeze_encoder || name.starts_with(HEAD_PREFIX))
            .collect();
        vars.sort_by(|a, b| a.0.cmp(b.0));
        vars.into_iter().map(|(_, v)| v.clone()).collect()
    }

    fn fingerprint_extra(&self) -> Vec<u8> {
        Vec::new()
    }
}

/// Size of a stand-in encoder.
#[derive(Debug, Clone, Copy)]
pub struct StandinSize {
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
}

impl Default for StandinSize {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            layers: 2,
            heads: 2,
            intermediate_size: 64,
            max_positions: 160,
        }
    }
}

/// Writes a tiny randomly initialized checkpoint in the pretrained layout
/// (`config.json`, `model.safetensors`, `tokenizer.json`) for `backend`.
///
/// The word-level vocabulary is built from `texts`. Weights are stored under
/// the `bert.` / `roberta.` prefix the way published checkpoints are.
pub fn write_standin_checkpoint(
    dir: &Path,
    backend: BackendId,
    texts: &[&str],
    size: StandinSize,
    seed: u64,
) -> Result<CheckpointFiles, BackendError> {
    let (specials, pad_id): (&[&str], u32) = match backend {
        BackendId::TransformerMono => (&["[PAD]", "[UNK]", "[CLS]", "[SEP]"], 0),
        BackendId::TransformerMulti => (&["<s>", "<pad>", "</s>", "<unk>"], 1),
        BackendId::LstmCustom => {
            return Err(BackendError::Validation(
                "lstm_custom has no pretrained checkpoint".into(),
            ))
        }
    };
    let (cls, sep, unk) = match backend {
        BackendId::TransformerMono => ("[CLS]", "[SEP]", "[UNK]"),
        _ => ("<s>", "</s>", "<unk>"),
    };

    let mut words: BTreeMap<String, usize> = BTreeMap::new();
    let splitter = regex::Regex::new(r"\w+|[^\w\s]+").unwrap();
    for text in texts {
        for m in splitter.find_iter(text) {
            *words.entry(m.as_str().to_string()).or_default() += 1;
        }
    }
    let mut vocab: BTreeMap<String, u32> = BTreeMap::new();
    for (i, s) in specials.iter().enumerate() {
        vocab.insert(s.to_string(), i as u32);
    }
    for w in words.keys() {
        let next = vocab.len() as u32;
        vocab.entry(w.clone()).or_insert(next);
    }
    let vocab_size = vocab.len();

    let io = |path: &Path, e: std::io::Error| checkpoint_err(path, e);
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;

    let model_json = json!({
        "type": "WordLevel",
        "vocab": vocab,
        "unk_token": unk,
    })
    .to_string();
    let model: WordLevel = serde_json::from_str(&model_json)
    .map_err(|e| BackendError::Tokenizer(e.to_string()))?;
    let template = TemplateProcessing::builder()
        .try_single(format!("{cls} $A {sep}"))
        .map_err(BackendError::Tokenizer)?
        .try_pair(format!("{cls} $A {sep} $B:1 {sep}:1"))
        .map_err(BackendError::Tokenizer)?
        .special_tokens(vec![(cls, vocab[cls]), (sep, vocab[sep])])
        .build()
        .map_err(|e| BackendError::Tokenizer(e.to_string()))?;
    let mut tokenizer = Tokenizer::new(model);
    tokenizer.with_pre_tokenizer(Some(Whitespace {}));
    tokenizer.with_post_processor(Some(template));
    let tok_path = dir.join(TOKENIZER_FILE);
    tokenizer
        .save(&tok_path, true)
        .map_err(|e| checkpoint_err(&tok_path, e))?;

    let config = match backend {
        BackendId::TransformerMono => json!({
            "model_type": "bert",
            "vocab_size": vocab_size,
            "hidden_size": size.hidden_size,
            "num_hidden_layers": size.layers,
            "num_attention_heads": size.heads,
            "intermediate_size": size.intermediate_size,
            "hidden_act": "gelu",
            "hidden_dropout_prob": 0.0,
            "attention_probs_dropout_prob": 0.0,
            "max_position_embeddings": size.max_positions,
            "type_vocab_size": 2,
            "initializer_range": 0.02,
            "layer_norm_eps": 1e-12,
            "pad_token_id": pad_id,
            "classifier_dropout": null,
        }),
        _ => json!({
            "model_type": "xlm-roberta",
            "vocab_size": vocab_size,
            "hidden_size": size.hidden_size,
            "num_hidden_layers": size.layers,
            "num_attention_heads": size.heads,
            "intermediate_size": size.intermediate_size,
            "hidden_act": "gelu",
            "hidden_dropout_prob": 0.0,
            "attention_probs_dropout_prob": 0.0,
            "max_position_embeddings": size.max_positions + pad_id as usize + 1,
            "type_vocab_size": 1,
            "initializer_range": 0.02,
            "layer_norm_eps": 1e-5,
            "pad_token_id": pad_id,
            "position_embedding_type": "absolute",
        }),
    };
    let cfg_path = dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap())
        .map_err(|e| io(&cfg_path, e))?;

    let enc_config = read_config(&cfg_path)?;
    let device = Device::Cpu;
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
    Encoder::new(&enc_config, positions(backend), vb)?;
    seeded_init(&varmap, seed, |name, _| init_rule(name, size.hidden_size))?;
    let prefix = weight_prefix(backend);
    let tensors: HashMap<String, Tensor> = sorted_vars(&varmap)
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect();
    let weights_path = dir.join(WEIGHTS_FILE);
    candle_core::safetensors::save(&tensors, &weights_path)?;

    Ok(CheckpointFiles::in_dir(dir))
}
