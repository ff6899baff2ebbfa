//! Custom recurrent classifier: learned embedding, one LSTM layer, and a
//! single-unit output read from the hidden state at the last real token.

use std::collections::HashMap;
use std::sync::OnceLock;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::rnn::{LSTMConfig, LSTM, RNN};
use candle_nn::{Embedding, Linear, Module, VarBuilder, VarMap};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::init::{seeded_init, Init};
use super::{BackendError, HyperParams, Network};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\w']+|[^\w\s]").unwrap())
}

pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    token_re().find_iter(text).map(|m| m.as_str())
}

/// Token vocabulary fitted on training text: `<pad>`, `<unk>`, then the most
/// frequent tokens (ties broken alphabetically) up to the size cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn fit<'a, I: IntoIterator<Item = &'a str>>(texts: I, max_size: usize) -> Self {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for tok in tokenize(text) {
                *freq.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(
            ranked
                .into_iter()
                .take(max_size.saturating_sub(2))
                .map(|(t, _)| t.to_string()),
        );
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token ids truncated to `max_len`; empty text encodes as a single pad.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = tokenize(text)
            .take(max_len)
            .map(|t| self.index.get(t).copied().unwrap_or(UNK_ID))
            .collect();
        if ids.is_empty() {
            ids.push(PAD_ID);
        }
        ids
    }
}

pub(crate) struct LstmNet {
    varmap: VarMap,
    embedding: Embedding,
    lstm: LSTM,
    head: Linear,
    vocab: Option<Vocabulary>,
    hp: HyperParams,
    device: Device,
}

impl LstmNet {
    pub(crate) fn new(hp: &HyperParams) -> Result<Self, BackendError> {
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let embedding = candle_nn::embedding(hp.vocab_size, hp.embedding_dim, vb.pp("embedding"))?;
        let lstm = candle_nn::lstm(
            hp.embedding_dim,
            hp.lstm_units,
            LSTMConfig::default(),
            vb.pp("lstm"),
        )?;
        let head = candle_nn::linear(hp.lstm_units, 1, vb.pp("output"))?;

        let recurrent_bound = 1.0 / (hp.lstm_units as f32).sqrt();
        let head_bound = (6.0 / (hp.lstm_units as f32 + 1.0)).sqrt();
        seeded_init(&varmap, hp.seed, |name, _| {
            if name.starts_with("embedding") {
                Init::Uniform(0.05)
            } else if name.starts_with("lstm") {
                Init::Uniform(recurrent_bound)
            } else if name.ends_with("bias") {
                Init::Zeros
            } else {
                Init::Uniform(head_bound)
            }
        })?;

        Ok(Self {
            varmap,
            embedding,
            lstm,
            head,
            vocab: None,
            hp: hp.clone(),
            device,
        })
    }

    pub(crate) fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocab.as_ref()
    }

    pub(crate) fn set_vocabulary(&mut self, vocab: Vocabulary) {
        self.vocab = Some(vocab);
    }
}

impl Network for LstmNet {
    fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    fn prepare(&mut self, train_texts: &[&str]) -> Result<(), BackendError> {
        self.vocab = Some(Vocabulary::fit(
            train_texts.iter().copied(),
            self.hp.vocab_size,
        ));
        Ok(())
    }

    fn logits(&self, texts: &[&str]) -> Result<Tensor, BackendError> {
        let vocab = self.vocab.as_ref().ok_or(BackendError::Untrained)?;
        let encoded: Vec<Vec<u32>> = texts
            .iter()
            .map(|t| vocab.encode(t, self.hp.max_sequence_length))
            .collect();
        let batch = encoded.len();
        let steps = encoded.iter().map(Vec::len).max().unwrap_or(1);
        let mut ids = vec![PAD_ID; batch * steps];
        let mut last = vec![0f32; batch * steps];
        for (b, seq) in encoded.iter().enumerate() {
            ids[b * steps..b * steps + seq.len()].copy_from_slice(seq);
            last[b * steps + seq.len() - 1] = 1.0;
        }
        let ids = Tensor::from_vec(ids, (batch, steps), &self.device)?;
        let last = Tensor::from_vec(last, (batch, steps, 1), &self.device)?;

        let embedded = self.embedding.forward(&ids)?;
        let states = self.lstm.seq(&embedded)?;
        let hidden = self.lstm.states_to_tensor(&states)?;
        let final_state = hidden.broadcast_mul(&last)?.sum(1)?;
        Ok(self.head.forward(&final_state)?.squeeze(1)?)
    }

    fn trainable_vars(&self) -> Vec<Var> {
        self.varmap.all_vars()
    }

    fn fingerprint_extra(&self) -> Vec<u8> {
        match &self.vocab {
            Some(v) => v.tokens.join("\n").into_bytes(),
            None => Vec::new(),
        }
    }

    fn as_lstm(&self) -> Option<&LstmNet> {
        Some(self)
    }

    fn as_lstm_mut(&mut self) -> Option<&mut LstmNet> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_ranks_by_frequency_then_alphabet() {
        let v = Vocabulary::fit(["b a a", "c b a", "d"], 5);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b", "c"]);
        assert_eq!(v.encode("a d zz", 10), vec![2, UNK_ID, UNK_ID]);
        assert_eq!(v.encode("a a a a", 2), vec![2, 2]);
        assert_eq!(v.encode("", 4), vec![PAD_ID]);
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        let toks: Vec<&str> = tokenize("don't drink it, ok?!").collect();
        assert_eq!(toks, vec!["don't", "drink", "it", ",", "ok", "?", "!"]);
    }

    #[test]
    fn vocabulary_survives_serde() {
        let v = Vocabulary::fit(["x y y"], 10);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"["<pad>","<unk>","y","x"]"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.encode("y x", 5), v.encode("y x", 5));
    }
}
