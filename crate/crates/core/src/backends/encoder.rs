//! BERT-family encoder stack built from differentiable tensor ops, so that
//! fine-tuning reaches every layer. Parameter names follow the published
//! checkpoint layout (`embeddings.*`, `encoder.layer.<i>.*`).

use candle_core::{DType, Module, Result, Tensor, D};
use candle_nn::{Embedding, Linear, VarBuilder};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum Activation {
    Gelu,
    #[serde(alias = "gelu_pytorch_tanh")]
    GeluNew,
    Relu,
}

fn default_activation() -> Activation {
    Activation::Gelu
}

fn default_eps() -> f64 {
    1e-12
}

fn default_type_vocab() -> usize {
    2
}

/// The `config.json` fields the encoder reads; others are ignored.
#[derive(Debug, Clone, Deserialize)]
pub(crate) struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    #[serde(default = "default_activation")]
    pub hidden_act: Activation,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default)]
    pub pad_token_id: u32,
}

/// How position ids are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Positions {
    /// `0, 1, 2, ...` for every sequence.
    Absolute,
    /// Real tokens count up from `pad + 1`; padding keeps `pad`.
    AfterPadding,
}

struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(size: usize, eps: f64, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get_with_hints(size, "weight", candle_nn::Init::Const(1.0))?,
            bias: vb.get_with_hints(size, "bias", candle_nn::Init::Const(0.0))?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        centered
            .broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attention_out: Linear,
    attention_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    output_norm: LayerNorm,
    heads: usize,
    activation: Activation,
}

impl Layer {
    fn new(c: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let h = c.hidden_size;
        let attn = vb.pp("attention");
        let sa = attn.pp("self");
        Ok(Self {
            query: candle_nn::linear(h, h, sa.pp("query"))?,
            key: candle_nn::linear(h, h, sa.pp("key"))?,
            value: candle_nn::linear(h, h, sa.pp("value"))?,
            attention_out: candle_nn::linear(h, h, attn.pp("output").pp("dense"))?,
            attention_norm: LayerNorm::new(h, c.layer_norm_eps, attn.pp("output").pp("LayerNorm"))?,
            intermediate: candle_nn::linear(h, c.intermediate_size, vb.pp("intermediate").pp("dense"))?,
            output: candle_nn::linear(c.intermediate_size, h, vb.pp("output").pp("dense"))?,
            output_norm: LayerNorm::new(h, c.layer_norm_eps, vb.pp("output").pp("LayerNorm"))?,
            heads: c.num_attention_heads,
            activation: c.hidden_act,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, h) = x.dims3()?;
        x.reshape((b, t, self.heads, h / self.heads))?
            .transpose(1, 2)?
            .contiguous()
    }

    /// `x`: (batch, steps, hidden); `mask_bias`: (batch, 1, 1, steps).
    fn forward(&self, x: &Tensor, mask_bias: &Tensor) -> Result<Tensor> {
        let (b, t, h) = x.dims3()?;
        let q = self.split_heads(&self.query.forward(x)?)?;
        let k = self.split_heads(&self.key.forward(x)?)?;
        let v = self.split_heads(&self.value.forward(x)?)?;
        let scale = 1.0 / ((h / self.heads) as f64).sqrt();
        let scores = (q.matmul(&k.t()?)? * scale)?.broadcast_add(mask_bias)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let context = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, t, h))?;
        let attended = self
            .attention_norm
            .forward(&(self.attention_out.forward(&context)? + x)?)?;
        let inner = self.intermediate.forward(&attended)?;
        let inner = match self.activation {
            Activation::Gelu => inner.gelu_erf()?,
            Activation::GeluNew => inner.gelu()?,
            Activation::Relu => inner.relu()?,
        };
        self.output_norm
            .forward(&(self.output.forward(&inner)? + attended)?)
    }
}

pub(crate) struct Encoder {
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    embedding_norm: LayerNorm,
    layers: Vec<Layer>,
    positions: Positions,
    pad_id: u32,
}

impl Encoder {
    pub(crate) fn new(c: &EncoderConfig, positions: Positions, vb: VarBuilder) -> Result<Self> {
        let emb = vb.pp("embeddings");
        let h = c.hidden_size;
        let layers = (0..c.num_hidden_layers)
            .map(|i| Layer::new(c, vb.pp("encoder").pp("layer").pp(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            word: candle_nn::embedding(c.vocab_size, h, emb.pp("word_embeddings"))?,
            position: candle_nn::embedding(c.max_position_embeddings, h, emb.pp("position_embeddings"))?,
            token_type: candle_nn::embedding(c.type_vocab_size, h, emb.pp("token_type_embeddings"))?,
            embedding_norm: LayerNorm::new(h, c.layer_norm_eps, emb.pp("LayerNorm"))?,
            layers,
            positions,
            pad_id: c.pad_token_id,
        })
    }

    fn position_ids(&self, ids: &[u32], mask: &[u32], batch: usize, steps: usize) -> Vec<u32> {
        match self.positions {
            Positions::Absolute => (0..batch).flat_map(|_| 0..steps as u32).collect(),
            Positions::AfterPadding => {
                let mut out = Vec::with_capacity(ids.len());
                for row in mask.chunks(steps) {
                    let mut seen = 0;
                    for &m in row {
                        seen += m;
                        out.push(if m == 1 { self.pad_id + seen } else { self.pad_id });
                    }
                }
                out
            }
        }
    }

    /// Final hidden states, (batch, steps, hidden), for row-major `ids` and
    /// attention `mask` of shape (batch, steps).
    pub(crate) fn forward(&self, ids: &[u32], mask: &[u32], batch: usize, steps: usize) -> Result<Tensor> {
        let device = self.word.embeddings().device();
        let positions = self.position_ids(ids, mask, batch, steps);
        let id_t = Tensor::from_slice(ids, (batch, steps), device)?;
        let pos_t = Tensor::from_vec(positions, (batch, steps), device)?;
        let type_t = Tensor::zeros((batch, steps), DType::U32, device)?;
        let x = (self.word.forward(&id_t)?
            + self.position.forward(&pos_t)?)?
            .add(&self.token_type.forward(&type_t)?)?;
        let mut x = self.embedding_norm.forward(&x)?;

        let bias: Vec<f32> = mask
            .iter()
            .map(|&m| if m == 1 { 0.0 } else { -1e4 })
            .collect();
        let mask_bias = Tensor::from_vec(bias, (batch, 1, 1, steps), device)?;
        for layer in &self.layers {
            x = layer.forward(&x, &mask_bias)?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use candle_nn::VarMap;

    #[test]
    fn layer_norm_matches_closed_form() {
        let ln = LayerNorm {
            weight: Tensor::new(&[1f32, 2.0, 1.0, 1.0], &Device::Cpu).unwrap(),
            bias: Tensor::new(&[0f32, 0.0, 0.0, 1.0], &Device::Cpu).unwrap(),
            eps: 0.0,
        };
        let x = Tensor::new(&[[1f32, 2.0, 3.0, 4.0]], &Device::Cpu).unwrap();
        let y: Vec<f32> = ln.forward(&x).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let sd = 1.25f32.sqrt();
        let want = [-1.5 / sd, 2.0 * -0.5 / sd, 0.5 / sd, 1.5 / sd + 1.0];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{y:?}");
        }
    }

    #[test]
    fn padding_positions_follow_the_pad_index() {
        let c: EncoderConfig = serde_json::from_str(
            r#"{"vocab_size":5,"hidden_size":4,"num_hidden_layers":0,"num_attention_heads":1,
                "intermediate_size":4,"max_position_embeddings":8,"pad_token_id":1}"#,
        )
        .unwrap();
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        let enc = Encoder::new(&c, Positions::AfterPadding, vb).unwrap();
        let pos = enc.position_ids(&[0, 3, 2, 0, 2, 1], &[1, 1, 1, 1, 1, 0], 2, 3);
        assert_eq!(pos, vec![2, 3, 4, 2, 3, 1]);
    }

    #[test]
    fn gradients_reach_the_embeddings() {
        let c: EncoderConfig = serde_json::from_str(
            r#"{"vocab_size":6,"hidden_size":4,"num_hidden_layers":1,"num_attention_heads":2,
                "intermediate_size":8,"max_position_embeddings":8}"#,
        )
        .unwrap();
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        let enc = Encoder::new(&c, Positions::Absolute, vb).unwrap();
        let out = enc.forward(&[1, 2, 3, 0], &[1, 1, 1, 0], 1, 4).unwrap();
        let target = Tensor::randn(0f32, 1.0, out.shape(), &Device::Cpu).unwrap();
        let loss = out.mul(&target).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let data = vm.data().lock().unwrap();
        for name in ["embeddings.word_embeddings.weight", "encoder.layer.0.attention.self.query.weight"] {
            let g = grads.get(data[name].as_tensor()).expect(name);
            let norm: f32 = g.sqr().unwrap().sum_all().unwrap().to_scalar().unwrap();
            assert!(norm > 0.0, "{name}");
        }
    }
}
