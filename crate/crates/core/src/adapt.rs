//! Target-task stage: a softmax classification head over the pooled
//! encoder representation, trained with the encoder frozen
//! (feature extraction) or unfrozen (full fine-tuning).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Binding, Graph, NodeId, Parameters, Tensor};
use crate::corpus::{Dataset, EmotionClass};
use crate::encoder::{encode_pooled, EncoderConfig};
use crate::error::{Error, Result};
use crate::tokenizer::{encode, TokenSequence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    Frozen,
    Unfrozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeadKind {
    /// Single affine layer: logits = W h + b.
    Linear,
    /// ReLU intermediate of width `hidden` before the affine layer.
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    #[serde(flatten)]
    pub kind: HeadKind,
    pub num_classes: usize,
}

impl HeadConfig {
    pub fn linear(num_classes: usize) -> Self {
        HeadConfig { kind: HeadKind::Linear, num_classes }
    }

    /// USE-style head: 256-wide ReLU projection then the softmax layer.
    pub fn mlp_default(num_classes: usize) -> Self {
        HeadConfig { kind: HeadKind::Mlp { hidden: 256 }, num_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if let HeadKind::Mlp { hidden } = self.kind {
            if hidden == 0 {
                return Err(Error::InvalidConfig("head hidden width must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Head parameters; the softmax weight matrix is stored as [K, H].
pub fn init_head(cfg: &HeadConfig, input_dim: usize, seed: u64) -> Result<Parameters> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = Parameters::new();
    let feature_dim = match cfg.kind {
        HeadKind::Linear => input_dim,
        HeadKind::Mlp { hidden } => {
            params.push("head.w1", Tensor::randn(&[input_dim, hidden], 0.02, &mut rng));
            hidden
        }
    };
    params.push("head.w", Tensor::randn(&[cfg.num_classes, feature_dim], 0.02, &mut rng));
    params.push("head.b", Tensor::zeros(&[1, cfg.num_classes]));
    Ok(params)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub mode: AdaptMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "batch_size and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder plus classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder_config: EncoderConfig,
    pub encoder: Parameters,
    pub head_config: HeadConfig,
    pub head: Parameters,
}

impl Model {
    pub fn new(
        encoder_config: EncoderConfig,
        encoder: Parameters,
        head_config: HeadConfig,
        head: Parameters,
    ) -> Self {
        Model { encoder_config, encoder, head_config, head }
    }
}

/// One encoded training example.
#[derive(Debug, Clone)]
pub struct Example {
    pub seq: TokenSequence,
    pub label: usize,
}

/// Encodes a labeled dataset into fixed-length id sequences.
pub fn encode_dataset(dataset: &Dataset, vocab: &Vocabulary, max_len: usize) -> Vec<Example> {
    dataset
        .messages
        .iter()
        .map(|m| Example {
            seq: encode(&m.clean_text, vocab, max_len),
            label: m.label.index(),
        })
        .collect()
}

/// Logits from head features: an optional ReLU projection, then
/// logits = features W^T + b.
fn head_logits(
    graph: &mut Graph,
    head_binding: &Binding,
    head_cfg: &HeadConfig,
    features: NodeId,
) -> Result<NodeId> {
    let features = match head_cfg.kind {
        HeadKind::Linear => features,
        HeadKind::Mlp { .. } => {
            let proj = graph.matmul(features, head_binding.id("head.w1"))?;
            graph.relu(proj)?
        }
    };
    let wt = graph.transpose(head_binding.id("head.w"))?;
    let scores = graph.matmul(features, wt)?;
    graph.add(scores, head_binding.id("head.b"))
}

fn logits_for_seq(
    graph: &mut Graph,
    enc_binding: &Binding,
    model_cfg: &EncoderConfig,
    head_binding: &Binding,
    head_cfg: &HeadConfig,
    seq: &TokenSequence,
) -> Result<NodeId> {
    let pooled = encode_pooled(graph, enc_binding, model_cfg, seq)?;
    head_logits(graph, head_binding, head_cfg, pooled)
}

/// Class probabilities for one sequence.
pub fn forward_classify(model: &Model, seq: &TokenSequence) -> Result<Vec<f64>> {
    let mut graph = Graph::new();
    let enc = Binding::bind(&mut graph, &model.encoder, false);
    let head = Binding::bind(&mut graph, &model.head, false);
    let logits = logits_for_seq(
        &mut graph,
        &enc,
        &model.encoder_config,
        &head,
        &model.head_config,
        seq,
    )?;
    let probs = graph.softmax(logits)?;
    Ok(graph.value(probs).data().to_vec())
}

/// Argmax with ties broken by the canonical class ordering.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Predicted class and probabilities for raw text.
pub fn predict(
    model: &Model,
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(EmotionClass, Vec<f64>)> {
    let seq = encode(text, vocab, max_len);
    let probs = forward_classify(model, &seq)?;
    let class = EmotionClass::from_index(argmax(&probs))?;
    Ok((class, probs))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_micro_f: f64,
}

/// Predicted label indices over a set of examples.
pub fn predict_examples(model: &Model, examples: &[Example]) -> Result<Vec<usize>> {
    examples
        .iter()
        .map(|ex| Ok(argmax(&forward_classify(model, &ex.seq)?)))
        .collect()
}

/// Micro-averaged F over a labeled example set.
pub fn micro_f(model: &Model, examples: &[Example]) -> Result<f64> {
    let preds = predict_examples(model, examples)?;
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let matrix = crate::eval::confusion(&preds, &golds, model.head_config.num_classes)?;
    Ok(crate::eval::metrics(&matrix)?.micro_f)
}

/// Cross-entropy fine-tuning with Adam. Frozen mode trains the head on
/// cached pooled features and leaves the encoder untouched; unfrozen
/// mode updates encoder and head jointly. Deterministic under the seed.
pub fn fine_tune(
    model: &mut Model,
    train: &[Example],
    val: &[Example],
    cfg: &FineTuneConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = model.head_config.num_classes;
    for ex in train.iter().chain(val) {
        if ex.label >= k {
            return Err(Error::LabelOutOfRange(ex.label, k));
        }
    }
    match cfg.mode {
        AdaptMode::Frozen => fine_tune_frozen(model, train, val, cfg),
        AdaptMode::Unfrozen => fine_tune_unfrozen(model, train, val, cfg),
    }
}

/// Pooled features of every example under the current (fixed) encoder.
fn pooled_features(model: &Model, examples: &[Example]) -> Result<Vec<Tensor>> {
    examples
        .iter()
        .map(|ex| {
            let mut graph = Graph::new();
            let enc = Binding::bind(&mut graph, &model.encoder, false);
            let pooled = encode_pooled(&mut graph, &enc, &model.encoder_config, &ex.seq)?;
            Ok(graph.value(pooled).clone())
        })
        .collect()
}

fn head_micro_f_on_features(
    model: &Model,
    features: &[Tensor],
    labels: &[usize],
) -> Result<f64> {
    let mut preds = Vec::with_capacity(features.len());
    for feat in features {
        let mut graph = Graph::new();
        let head = Binding::bind(&mut graph, &model.head, false);
        let f = graph.constant(feat.clone());
        let logits = head_logits(&mut graph, &head, &model.head_config, f)?;
        preds.push(argmax(graph.value(logits).data()));
    }
    let matrix = crate::eval::confusion(&preds, labels, model.head_config.num_classes)?;
    Ok(crate::eval::metrics(&matrix)?.micro_f)
}

fn fine_tune_frozen(
    model: &mut Model,
    train: &[Example],
    val: &[Example],
    cfg: &FineTuneConfig,
) -> Result<Vec<EpochRecord>> {
    let train_feats = pooled_features(model, train)?;
    let val_feats = pooled_features(model, val)?;
    let val_labels: Vec<usize> = val.iter().map(|e| e.label).collect();
    let mut adam = AdamState::new(&model.head, AdamConfig::with_lr(cfg.learning_rate));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut graph = Graph::new();
            let head = Binding::bind(&mut graph, &model.head, true);
            let rows: Vec<NodeId> = chunk
                .iter()
                .map(|&i| graph.constant(train_feats[i].clone()))
                .collect();
            let batch = graph.concat_rows(&rows)?;
            let logits = head_logits(&mut graph, &head, &model.head_config, batch)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
            let loss = graph.cross_entropy(logits, &labels)?;
            graph.backward(loss)?;
            total += graph.value(loss).item() * chunk.len() as f64;
            let grads = head.grads(&graph, &model.head);
            adam.step(&mut model.head, &grads)?;
        }
        let val_micro_f = head_micro_f_on_features(model, &val_feats, &val_labels)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_micro_f,
        });
    }
    Ok(history)
}

fn fine_tune_unfrozen(
    model: &mut Model,
    train: &[Example],
    val: &[Example],
    cfg: &FineTuneConfig,
) -> Result<Vec<EpochRecord>> {
    let mut enc_adam = AdamState::new(&model.encoder, AdamConfig::with_lr(cfg.learning_rate));
    let mut head_adam = AdamState::new(&model.head, AdamConfig::with_lr(cfg.learning_rate));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut graph = Graph::new();
            let enc = Binding::bind(&mut graph, &model.encoder, true);
            let head = Binding::bind(&mut graph, &model.head, true);
            let mut logit_rows = Vec::with_capacity(chunk.len());
            for &i in chunk {
                logit_rows.push(logits_for_seq(
                    &mut graph,
                    &enc,
                    &model.encoder_config,
                    &head,
                    &model.head_config,
                    &train[i].seq,
                )?);
            }
            let logits = graph.concat_rows(&logit_rows)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
            let loss = graph.cross_entropy(logits, &labels)?;
            graph.backward(loss)?;
            total += graph.value(loss).item() * chunk.len() as f64;
            let enc_grads = enc.grads(&graph, &model.encoder);
            let head_grads = head.grads(&graph, &model.head);
            enc_adam.step(&mut model.encoder, &enc_grads)?;
            head_adam.step(&mut model.head, &head_grads)?;
        }
        let val_micro_f = micro_f(model, val)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_micro_f,
        });
    }
    Ok(history)
}
