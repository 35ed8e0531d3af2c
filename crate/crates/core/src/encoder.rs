//! Two sequence encoders over token ids: a micro transformer encoder
//! pooled at [CLS], and a deep-averaging (DAN) encoder that averages
//! content embeddings through a feed-forward stack.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Binding, Graph, NodeId, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::tokenizer::TokenSequence;

pub const LAYER_NORM_EPS: f64 = 1e-5;
const ATTENTION_MASK_BIAS: f64 = -1e9;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Transformer,
    Dan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl EncoderConfig {
    /// Desk-scale transformer: 2 layers, 4 heads, 64-dim hidden,
    /// 128-dim feed-forward, 32-token sequences.
    pub fn desk_transformer(vocab_size: usize) -> Self {
        EncoderConfig {
            kind: EncoderKind::Transformer,
            num_layers: 2,
            num_heads: 4,
            hidden_dim: 64,
            ffn_dim: 128,
            max_len: 32,
            vocab_size,
        }
    }

    pub fn desk_dan(vocab_size: usize) -> Self {
        EncoderConfig { kind: EncoderKind::Dan, ..Self::desk_transformer(vocab_size) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.hidden_dim == 0 || self.ffn_dim == 0 || self.max_len < 3 || self.vocab_size < 6 {
            return bad("dimensions must be positive (max_len >= 3, vocab >= 6)".into());
        }
        if self.ffn_dim < self.hidden_dim {
            return bad(format!("ffn_dim {} < hidden_dim {}", self.ffn_dim, self.hidden_dim));
        }
        match self.kind {
            EncoderKind::Transformer => {
                if self.num_heads == 0 || self.hidden_dim % self.num_heads != 0 {
                    return bad(format!(
                        "hidden_dim {} not divisible by num_heads {}",
                        self.hidden_dim, self.num_heads
                    ));
                }
            }
            EncoderKind::Dan => {}
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: EncoderConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Expected (name, shape) pairs for a config, in checkpoint order.
fn expected_shapes(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let (h, f) = (cfg.hidden_dim, cfg.ffn_dim);
    let mut out = vec![("tok_emb".to_string(), vec![cfg.vocab_size, h])];
    match cfg.kind {
        EncoderKind::Transformer => {
            out.push(("pos_emb".into(), vec![cfg.max_len, h]));
            for l in 0..cfg.num_layers {
                for w in ["wq", "wk", "wv", "wo"] {
                    out.push((format!("layer{l}.attn.{w}"), vec![h, h]));
                }
                out.push((format!("layer{l}.ffn.w1"), vec![h, f]));
                out.push((format!("layer{l}.ffn.w2"), vec![f, h]));
                for ln in ["ln1", "ln2"] {
                    out.push((format!("layer{l}.{ln}.gain"), vec![1, h]));
                    out.push((format!("layer{l}.{ln}.bias"), vec![1, h]));
                }
            }
        }
        EncoderKind::Dan => {
            out.push(("dan.w1".into(), vec![h, f]));
            out.push(("dan.w2".into(), vec![f, h]));
        }
    }
    out
}

/// Fresh random parameters for a config.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> Result<Parameters> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = Parameters::new();
    for (name, shape) in expected_shapes(cfg) {
        let tensor = if name.ends_with(".gain") {
            Tensor::filled(&shape, 1.0)
        } else if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            Tensor::randn(&shape, INIT_STD, &mut rng)
        };
        params.push(name, tensor);
    }
    Ok(params)
}

/// Checks that a loaded checkpoint matches the config's layout.
pub fn validate_params(cfg: &EncoderConfig, params: &Parameters) -> Result<()> {
    for (name, shape) in expected_shapes(cfg) {
        match params.get(&name) {
            Some(t) if t.shape() == shape.as_slice() => {}
            Some(t) => {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: checkpoint {:?} vs config {shape:?}",
                    t.shape()
                )))
            }
            None => {
                return Err(Error::ShapeMismatch(format!("missing parameter {name}")))
            }
        }
    }
    Ok(())
}

/// Scaled dot-product self-attention over `x` with `num_heads` heads.
/// Key positions where `key_mask` is false receive a large negative
/// score bias, so their post-softmax weight underflows to exactly zero.
pub fn multi_head_attention(
    graph: &mut Graph,
    x: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: NodeId,
    num_heads: usize,
    key_mask: &[bool],
) -> Result<NodeId> {
    let h = graph.value(x).cols();
    let t = graph.value(x).rows();
    if num_heads == 0 || h % num_heads != 0 {
        return Err(Error::ShapeMismatch(format!(
            "attention: hidden {h} not divisible by {num_heads} heads"
        )));
    }
    if key_mask.len() != t {
        return Err(Error::LengthMismatch(key_mask.len(), t));
    }
    let d = h / num_heads;
    let scale = 1.0 / (d as f64).sqrt();

    let q = graph.matmul(x, wq)?;
    let k = graph.matmul(x, wk)?;
    let v = graph.matmul(x, wv)?;

    let bias = if key_mask.iter().all(|&m| m) {
        None
    } else {
        let mut b = Tensor::zeros(&[t, t]);
        for i in 0..t {
            for (j, &m) in key_mask.iter().enumerate() {
                if !m {
                    b.data_mut()[i * t + j] = ATTENTION_MASK_BIAS;
                }
            }
        }
        Some(graph.constant(b))
    };

    let mut heads = Vec::with_capacity(num_heads);
    for a in 0..num_heads {
        let qa = graph.slice_cols(q, a * d, d)?;
        let ka = graph.slice_cols(k, a * d, d)?;
        let va = graph.slice_cols(v, a * d, d)?;
        let kat = graph.transpose(ka)?;
        let scores = graph.matmul(qa, kat)?;
        let mut scores = graph.scale(scores, scale)?;
        if let Some(b) = bias {
            scores = graph.add(scores, b)?;
        }
        let weights = graph.softmax(scores)?;
        heads.push(graph.matmul(weights, va)?);
    }
    let cat = graph.concat_cols(&heads)?;
    graph.matmul(cat, wo)
}

/// Attention weights of one forward pass, head-major, for inspection.
pub fn attention_weights(
    cfg: &EncoderConfig,
    params: &Parameters,
    layer: usize,
    x_values: &Tensor,
    key_mask: &[bool],
) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let bind = Binding::bind(&mut g, params, false);
    let x = g.constant(x_values.clone());
    let h = cfg.hidden_dim;
    let d = h / cfg.num_heads;
    let scale = 1.0 / (d as f64).sqrt();
    let t = x_values.rows();
    let q = g.matmul(x, bind.id(&format!("layer{layer}.attn.wq")))?;
    let k = g.matmul(x, bind.id(&format!("layer{layer}.attn.wk")))?;
    let mut out = Vec::new();
    for a in 0..cfg.num_heads {
        let qa = g.slice_cols(q, a * d, d)?;
        let ka = g.slice_cols(k, a * d, d)?;
        let kat = g.transpose(ka)?;
        let scores = g.matmul(qa, kat)?;
        let mut scores = g.scale(scores, scale)?;
        if !key_mask.iter().all(|&m| m) {
            let mut b = Tensor::zeros(&[t, t]);
            for i in 0..t {
                for (j, &m) in key_mask.iter().enumerate() {
                    if !m {
                        b.data_mut()[i * t + j] = ATTENTION_MASK_BIAS;
                    }
                }
            }
            let bc = g.constant(b);
            scores = g.add(scores, bc)?;
        }
        let w = g.softmax(scores)?;
        out.push(g.value(w).clone());
    }
    Ok(out)
}

/// Transformer forward over the real (masked-in) prefix of `seq`.
/// Returns the per-position hidden states and the [CLS] pooled state.
/// PAD positions are never computed; because masked attention weights
/// are exactly zero they cannot influence the result.
pub fn encode_transformer(
    graph: &mut Graph,
    binding: &Binding,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
) -> Result<(NodeId, NodeId)> {
    if cfg.kind != EncoderKind::Transformer {
        return Err(Error::InvalidConfig("encode_transformer needs a transformer config".into()));
    }
    if seq.max_len() > cfg.max_len {
        return Err(Error::ShapeMismatch(format!(
            "sequence length {} exceeds configured max_len {}",
            seq.max_len(),
            cfg.max_len
        )));
    }
    let real = seq.real_len();
    if real == 0 {
        return Err(Error::EmptySequence);
    }
    let ids: Vec<usize> = seq.ids[..real].iter().map(|&i| i as usize).collect();
    if let Some(&bad) = ids.iter().find(|&&i| i >= cfg.vocab_size) {
        return Err(Error::IndexOutOfRange(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let positions: Vec<usize> = (0..real).collect();
    let tok = graph.gather_rows(binding.id("tok_emb"), &ids)?;
    let pos = graph.gather_rows(binding.id("pos_emb"), &positions)?;
    let mut x = graph.add(tok, pos)?;
    let all_real = vec![true; real];
    for l in 0..cfg.num_layers {
        let name = |part: &str| format!("layer{l}.{part}");
        let attn = multi_head_attention(
            graph,
            x,
            binding.id(&name("attn.wq")),
            binding.id(&name("attn.wk")),
            binding.id(&name("attn.wv")),
            binding.id(&name("attn.wo")),
            cfg.num_heads,
            &all_real,
        )?;
        let res = graph.add(x, attn)?;
        x = graph.layer_norm(
            res,
            binding.id(&name("ln1.gain")),
            binding.id(&name("ln1.bias")),
            LAYER_NORM_EPS,
        )?;
        let inner = graph.matmul(x, binding.id(&name("ffn.w1")))?;
        let act = graph.relu(inner)?;
        let ffn = graph.matmul(act, binding.id(&name("ffn.w2")))?;
        let res = graph.add(x, ffn)?;
        x = graph.layer_norm(
            res,
            binding.id(&name("ln2.gain")),
            binding.id(&name("ln2.bias")),
            LAYER_NORM_EPS,
        )?;
    }
    let pooled = graph.gather_rows(x, &[0])?;
    Ok((x, pooled))
}

/// DAN forward: mean of content-token embeddings (CLS/SEP/PAD
/// excluded) through two ReLU feed-forward layers.
pub fn encode_dan(
    graph: &mut Graph,
    binding: &Binding,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
) -> Result<NodeId> {
    if cfg.kind != EncoderKind::Dan {
        return Err(Error::InvalidConfig("encode_dan needs a DAN config".into()));
    }
    let content: Vec<usize> = seq
        .content_positions()
        .map(|p| seq.ids[p] as usize)
        .collect();
    if content.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(&bad) = content.iter().find(|&&i| i >= cfg.vocab_size) {
        return Err(Error::IndexOutOfRange(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let emb = graph.gather_rows(binding.id("tok_emb"), &content)?;
    let n = content.len();
    let avg_weights = graph.constant(Tensor::row(vec![1.0 / n as f64; n]));
    let avg = graph.matmul(avg_weights, emb)?;
    let h1 = graph.matmul(avg, binding.id("dan.w1"))?;
    let h1 = graph.relu(h1)?;
    let h2 = graph.matmul(h1, binding.id("dan.w2"))?;
    graph.relu(h2)
}

/// Pooled representation for either encoder kind.
pub fn encode_pooled(
    graph: &mut Graph,
    binding: &Binding,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
) -> Result<NodeId> {
    match cfg.kind {
        EncoderKind::Transformer => Ok(encode_transformer(graph, binding, cfg, seq)?.1),
        EncoderKind::Dan => encode_dan(graph, binding, cfg, seq),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{CLS, PAD, SEP};

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            kind: EncoderKind::Transformer,
            num_layers: 2,
            num_heads: 2,
            hidden_dim: 8,
            ffn_dim: 16,
            max_len: 10,
            vocab_size: 20,
        }
    }

    fn seq(content: &[u32], max_len: usize) -> TokenSequence {
        let mut ids = vec![CLS];
        ids.extend_from_slice(content);
        ids.push(SEP);
        let real = ids.len();
        ids.resize(max_len, PAD);
        let mut mask = vec![1u8; real];
        mask.resize(max_len, 0);
        TokenSequence { ids, mask }
    }

    #[test]
    fn config_validation() {
        assert!(tiny_cfg().validate().is_ok());
        let mut bad = tiny_cfg();
        bad.num_heads = 3;
        assert!(bad.validate().is_err());
        let mut bad = tiny_cfg();
        bad.ffn_dim = 4;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn masked_attention_weights_are_exactly_zero() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 1).unwrap();
        let x = Tensor::randn(&[5, 8], 1.0, &mut ChaCha20Rng::seed_from_u64(2));
        let mask = [true, true, true, false, false];
        let heads = attention_weights(&cfg, &params, 0, &x, &mask).unwrap();
        for w in &heads {
            for i in 0..5 {
                let row = &w.data()[i * 5..(i + 1) * 5];
                assert_eq!(row[3], 0.0);
                assert_eq!(row[4], 0.0);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_real_token_attends_to_itself() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 3).unwrap();
        let x = Tensor::randn(&[4, 8], 1.0, &mut ChaCha20Rng::seed_from_u64(4));
        let mask = [true, false, false, false];
        let heads = attention_weights(&cfg, &params, 0, &x, &mask).unwrap();
        for w in &heads {
            assert_eq!(w.data()[0], 1.0);
        }
    }

    #[test]
    fn identical_rows_give_uniform_attention() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 5).unwrap();
        let row: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&row);
        }
        let x = Tensor::from_vec(&[3, 8], data).unwrap();
        let heads = attention_weights(&cfg, &params, 0, &x, &[true; 3]).unwrap();
        for w in &heads {
            for v in w.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_zero_layer_stack_pools_raw_embedding() {
        let mut cfg = tiny_cfg();
        cfg.num_layers = 0;
        let params = init_params(&cfg, 6).unwrap();
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &params, false);
        let s = seq(&[7, 8], cfg.max_len);
        let (_, pooled) = encode_transformer(&mut g, &bind, &cfg, &s).unwrap();
        let tok = params.get("tok_emb").unwrap();
        let pos = params.get("pos_emb").unwrap();
        let h = cfg.hidden_dim;
        for j in 0..h {
            let expect = tok.data()[CLS as usize * h + j] + pos.data()[j];
            assert_eq!(g.value(pooled).data()[j], expect);
        }
    }

    #[test]
    fn padding_never_changes_pooled_output() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 7).unwrap();
        let short = seq(&[5, 6, 7], 6);
        let long = seq(&[5, 6, 7], 10);
        let pooled_of = |s: &TokenSequence| {
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, &params, false);
            let (_, pooled) = encode_transformer(&mut g, &bind, &cfg, s).unwrap();
            g.value(pooled).clone()
        };
        assert_eq!(pooled_of(&short), pooled_of(&long));
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 8).unwrap();
        let s = seq(&[5, 9, 11, 12], cfg.max_len);
        let run = || {
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, &params, false);
            let (_, pooled) = encode_transformer(&mut g, &bind, &cfg, &s).unwrap();
            g.value(pooled).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn transformer_cost_grows_with_real_tokens_dan_linearly() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 9).unwrap();
        let flops_of = |n: usize| {
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, &params, false);
            let content: Vec<u32> = (0..n as u32).map(|i| 5 + i).collect();
            let s = seq(&content, cfg.max_len);
            encode_transformer(&mut g, &bind, &cfg, &s).unwrap();
            g.flops()
        };
        let counts: Vec<u64> = (1..6).map(flops_of).collect();
        assert!(counts.windows(2).all(|w| w[1] > w[0]), "{counts:?}");

        let dan_cfg = EncoderConfig { kind: EncoderKind::Dan, ..cfg };
        let dan_params = init_params(&dan_cfg, 9).unwrap();
        let dan_flops = |n: usize| {
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, &dan_params, false);
            let content: Vec<u32> = (0..n as u32).map(|i| 5 + i).collect();
            let s = seq(&content, dan_cfg.max_len);
            encode_dan(&mut g, &bind, &dan_cfg, &s).unwrap();
            g.flops()
        };
        // per-token cost of the DAN is constant: the averaging adds a
        // fixed number of operations per extra token
        let d1 = dan_flops(2) - dan_flops(1);
        let d2 = dan_flops(3) - dan_flops(2);
        let d3 = dan_flops(4) - dan_flops(3);
        assert_eq!(d1, d2);
        assert_eq!(d2, d3);
    }

    #[test]
    fn dan_single_token_average_is_embedding() {
        let cfg = EncoderConfig { kind: EncoderKind::Dan, ..tiny_cfg() };
        let params = init_params(&cfg, 10).unwrap();
        let one = seq(&[6], cfg.max_len);
        let double = seq(&[6, 6], cfg.max_len);
        let pooled_of = |s: &TokenSequence| {
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, &params, false);
            let p = encode_dan(&mut g, &bind, &cfg, s).unwrap();
            g.value(p).clone()
        };
        // duplicated token leaves the average unchanged
        assert_eq!(pooled_of(&one), pooled_of(&double));
    }

    #[test]
    fn dan_empty_content_is_error() {
        let cfg = EncoderConfig { kind: EncoderKind::Dan, ..tiny_cfg() };
        let params = init_params(&cfg, 11).unwrap();
        let mut g = Graph::new();
        let bind = Binding::bind(&mut g, &params, false);
        let s = seq(&[], cfg.max_len);
        assert!(matches!(
            encode_dan(&mut g, &bind, &cfg, &s),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn checkpoint_shape_validation() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 12).unwrap();
        validate_params(&cfg, &params).unwrap();
        let mut other = cfg;
        other.hidden_dim = 16;
        other.ffn_dim = 16;
        assert!(validate_params(&other, &params).is_err());
    }
}
