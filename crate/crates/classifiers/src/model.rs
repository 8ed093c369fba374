//! Bidirectional transformer encoder with a linear classification head.
//! Parameter names follow published BERT/RoBERTa checkpoints so their
//! weights load directly.

use candle_core::{DType, Device, IndexOp, Module, Result, Tensor, D};
use candle_nn::{embedding, layer_norm, linear, Embedding, LayerNorm, Linear, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::registry::{EncoderConfig, Family, Pooling};

/// Seeded inverted dropout; candle's own sampling is not seedable on CPU.
pub struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn apply(&mut self, xs: &Tensor) -> Result<Tensor> {
        if self.p <= 0.0 {
            return Ok(xs.clone());
        }
        let keep = 1.0 - self.p;
        let scale = (1.0 / keep) as f32;
        let mask: Vec<f32> = (0..xs.elem_count())
            .map(|_| if self.rng.gen_bool(keep) { scale } else { 0.0 })
            .collect();
        xs.mul(&Tensor::from_vec(mask, xs.shape(), xs.device())?)
    }
}

fn maybe_dropout(xs: Tensor, dropout: &mut Option<&mut Dropout>) -> Result<Tensor> {
    match dropout {
        Some(d) => d.apply(&xs),
        None => Ok(xs),
    }
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
}

impl Layer {
    fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let h = cfg.hidden_size;
        let att = vb.pp("attention");
        Ok(Self {
            query: linear(h, h, att.pp("self").pp("query"))?,
            key: linear(h, h, att.pp("self").pp("key"))?,
            value: linear(h, h, att.pp("self").pp("value"))?,
            attn_out: linear(h, h, att.pp("output").pp("dense"))?,
            attn_norm: layer_norm(h, cfg.layer_norm_eps, att.pp("output").pp("LayerNorm"))?,
            intermediate: linear(h, cfg.intermediate_size, vb.pp("intermediate").pp("dense"))?,
            output: linear(cfg.intermediate_size, h, vb.pp("output").pp("dense"))?,
            out_norm: layer_norm(h, cfg.layer_norm_eps, vb.pp("output").pp("LayerNorm"))?,
        })
    }

    fn forward(
        &self,
        xs: &Tensor,
        bias: &Tensor,
        heads: usize,
        dropout: &mut Option<&mut Dropout>,
    ) -> Result<Tensor> {
        let (b, t, h) = xs.dims3()?;
        let dh = h / heads;
        let split = |x: Tensor| -> Result<Tensor> {
            x.reshape((b, t, heads, dh))?.transpose(1, 2)?.contiguous()
        };
        let q = split(self.query.forward(xs)?)?;
        let k = split(self.key.forward(xs)?)?;
        let v = split(self.value.forward(xs)?)?;
        let scores = (q.matmul(&k.t()?)? / (dh as f64).sqrt())?.broadcast_add(bias)?;
        let probs = candle_nn::ops::softmax_last_dim(&scores)?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.reshape((b, t, h))?;
        let attn = maybe_dropout(self.attn_out.forward(&ctx)?, dropout)?;
        let xs = self.attn_norm.forward(&(attn + xs)?)?;
        let inner = self.intermediate.forward(&xs)?.gelu_erf()?;
        let out = maybe_dropout(self.output.forward(&inner)?, dropout)?;
        self.out_norm.forward(&(out + xs)?)
    }
}

pub struct EncoderClassifier {
    family: Family,
    pooling: Pooling,
    config: EncoderConfig,
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    emb_norm: LayerNorm,
    layers: Vec<Layer>,
    classifier: Linear,
}

impl EncoderClassifier {
    pub fn new(
        config: &EncoderConfig,
        family: Family,
        pooling: Pooling,
        num_labels: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let enc = vb.pp(family.prefix());
        let emb = enc.pp("embeddings");
        let h = config.hidden_size;
        let layers = (0..config.num_hidden_layers)
            .map(|i| Layer::new(config, enc.pp("encoder").pp("layer").pp(i)))
            .collect::<Result<_>>()?;
        Ok(Self {
            family,
            pooling,
            config: config.clone(),
            word: embedding(config.vocab_size, h, emb.pp("word_embeddings"))?,
            position: embedding(
                config.max_position_embeddings,
                h,
                emb.pp("position_embeddings"),
            )?,
            token_type: embedding(
                config.type_vocab_size.max(1),
                h,
                emb.pp("token_type_embeddings"),
            )?,
            emb_norm: layer_norm(h, config.layer_norm_eps, emb.pp("LayerNorm"))?,
            layers,
            classifier: linear(h, num_labels, vb.pp("classifier"))?,
        })
    }

    /// Position ids: BERT counts from 0; RoBERTa counts real tokens from
    /// `pad + 1` and gives padding the pad index.
    fn positions(&self, mask: &[Vec<u32>]) -> Vec<u32> {
        let pad = self.config.pad_token_id;
        mask.iter()
            .flat_map(|row| {
                let mut next = 0u32;
                row.iter()
                    .enumerate()
                    .map(|(i, &m)| match self.family {
                        Family::Bert => i as u32,
                        Family::Roberta if m == 1 => {
                            next += 1;
                            pad + next
                        }
                        Family::Roberta => pad,
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Logits `(batch, num_labels)` for right-padded `ids` / `mask` rows of
    /// equal length. Dropout is applied only when given.
    pub fn forward(
        &self,
        ids: &[Vec<u32>],
        mask: &[Vec<u32>],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Tensor> {
        let b = ids.len();
        let t = ids.first().map_or(0, Vec::len);
        let device = Device::Cpu;
        let flat_ids: Vec<u32> = ids.iter().flatten().copied().collect();
        let flat_mask: Vec<f32> = mask.iter().flatten().map(|&m| m as f32).collect();
        let ids_t = Tensor::from_vec(flat_ids, (b, t), &device)?;
        let pos_t = Tensor::from_vec(self.positions(mask), (b, t), &device)?;
        let types_t = Tensor::zeros((b, t), DType::U32, &device)?;
        let mask_t = Tensor::from_vec(flat_mask, (b, t), &device)?;

        let xs = ((self.word.forward(&ids_t)? + self.position.forward(&pos_t)?)?
            + self.token_type.forward(&types_t)?)?;
        let mut xs = maybe_dropout(self.emb_norm.forward(&xs)?, &mut dropout)?;
        // additive attention bias: 0 for tokens, large negative for padding
        let bias = ((mask_t.clone() - 1.0)? * 1e9)?.reshape((b, 1, 1, t))?;
        for layer in &self.layers {
            xs = layer.forward(&xs, &bias, self.config.num_attention_heads, &mut dropout)?;
        }
        let pooled = match self.pooling {
            Pooling::FirstToken => xs.i((.., 0, ..))?.contiguous()?,
            Pooling::Mean => {
                let m = mask_t.unsqueeze(2)?;
                let summed = xs.broadcast_mul(&m)?.sum(1)?;
                summed.broadcast_div(&m.sum(1)?)?
            }
        };
        let pooled = maybe_dropout(pooled, &mut dropout)?;
        self.classifier.forward(&pooled)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }
}

/// Standard normal sample by Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Overwrite every variable deterministically: normal(0, range) for
/// weights and embeddings (padding row zeroed), ones for LayerNorm
/// weights, zeros for biases. Variables are visited in name order.
pub fn seeded_init(varmap: &VarMap, config: &EncoderConfig, seed: u64) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock");
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in names {
        let var = &data[name];
        let shape = var.shape().clone();
        let n = shape.elem_count();
        let values: Vec<f32> = if name.ends_with("LayerNorm.weight") {
            vec![1.0; n]
        } else if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let mut v: Vec<f32> = (0..n)
                .map(|_| (normal(&mut rng) * config.initializer_range) as f32)
                .collect();
            if name.ends_with("word_embeddings.weight") {
                let h = shape.dims()[1];
                let p = config.pad_token_id as usize * h;
                v[p..p + h].iter_mut().for_each(|x| *x = 0.0);
            }
            v
        };
        var.set(&Tensor::from_vec(values, shape, var.device())?)?;
    }
    Ok(())
}

/// Row-wise softmax in f64 of f32 logits.
pub fn probabilities(logits: &[f32]) -> Vec<f64> {
    let as64: Vec<f64> = logits.iter().map(|&x| x as f64).collect();
    crimeclass_core::prediction::softmax(&as64)
}

pub fn logits_to_vec(logits: &Tensor) -> Result<Vec<Vec<f32>>> {
    logits.to_dtype(DType::F32)?.to_vec2()
}

pub fn argmax_rows(logits: &Tensor) -> Result<Vec<u32>> {
    logits.argmax(D::Minus1)?.to_vec1()
}
