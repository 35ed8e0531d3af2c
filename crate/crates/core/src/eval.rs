//! Metrics, benchmark taxonomy mapping, paired statistical comparison,
//! and the fine-tuning-set-size ablation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::adapt::{fine_tune, micro_f, predict, Example, FineTuneConfig, Model};
use crate::corpus::EmotionClass;
use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

/// K x K counts, rows = gold, columns = predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.k + pred]
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        self.counts[gold * self.k + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }
}

pub fn confusion(preds: &[usize], golds: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch(preds.len(), golds.len()));
    }
    let mut m = ConfusionMatrix::new(k);
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= k {
            return Err(Error::LabelOutOfRange(p, k));
        }
        if g >= k {
            return Err(Error::LabelOutOfRange(g, k));
        }
        m.add(g, p);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub micro_f: f64,
    pub accuracy: f64,
    pub n: u64,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F plus micro-averaged F from pooled
/// counts. For single-label full-coverage predictions the micro-F
/// equals accuracy.
pub fn metrics(matrix: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = matrix.k();
    let mut per_class = Vec::with_capacity(k);
    let mut pooled_tp = 0u64;
    let mut pooled_fp = 0u64;
    let mut pooled_fn = 0u64;
    for c in 0..k {
        let tp = matrix.get(c, c);
        let fp: u64 = (0..k).filter(|&g| g != c).map(|g| matrix.get(g, c)).sum();
        let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| matrix.get(c, p)).sum();
        pooled_tp += tp;
        pooled_fp += fp;
        pooled_fn += fn_;
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        per_class.push(ClassMetrics { precision: p, recall: r, f1: f1_of(p, r) });
    }
    let micro_f = if 2 * pooled_tp + pooled_fp + pooled_fn == 0 {
        0.0
    } else {
        2.0 * pooled_tp as f64 / (2 * pooled_tp + pooled_fp + pooled_fn) as f64
    };
    Ok(MetricsReport {
        per_class,
        micro_f,
        accuracy: matrix.trace() as f64 / total as f64,
        n: total,
    })
}

/// The three benchmark emotion labels shared by the external datasets.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkClass {
    Joy,
    Anger,
    Sadness,
}

impl BenchmarkClass {
    pub const ALL: [BenchmarkClass; 3] =
        [BenchmarkClass::Joy, BenchmarkClass::Anger, BenchmarkClass::Sadness];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkClass::Joy => "joy",
            BenchmarkClass::Anger => "anger",
            BenchmarkClass::Sadness => "sadness",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "joy" => Ok(BenchmarkClass::Joy),
            "anger" => Ok(BenchmarkClass::Anger),
            "sadness" => Ok(BenchmarkClass::Sadness),
            other => Err(Error::UnknownBenchmarkClass(other.to_string())),
        }
    }
}

/// Accept-sets mapping each benchmark class onto the four-quadrant
/// taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkTaxonomyMap {
    map: BTreeMap<BenchmarkClass, BTreeSet<EmotionClass>>,
}

impl BenchmarkTaxonomyMap {
    /// joy -> {happy_active, happy_inactive}; anger -> {unhappy_active};
    /// sadness -> {unhappy_inactive}.
    pub fn canonical() -> Self {
        let mut map = BTreeMap::new();
        map.insert(
            BenchmarkClass::Joy,
            [EmotionClass::HappyActive, EmotionClass::HappyInactive]
                .into_iter()
                .collect(),
        );
        map.insert(
            BenchmarkClass::Anger,
            [EmotionClass::UnhappyActive].into_iter().collect(),
        );
        map.insert(
            BenchmarkClass::Sadness,
            [EmotionClass::UnhappyInactive].into_iter().collect(),
        );
        BenchmarkTaxonomyMap { map }
    }

    pub fn new(map: BTreeMap<BenchmarkClass, BTreeSet<EmotionClass>>) -> Self {
        BenchmarkTaxonomyMap { map }
    }

    pub fn accept_set(&self, class: BenchmarkClass) -> Option<&BTreeSet<EmotionClass>> {
        self.map.get(&class)
    }

    /// The benchmark class whose accept-set contains `pred`, if any.
    pub fn class_of(&self, pred: EmotionClass) -> Option<BenchmarkClass> {
        self.map
            .iter()
            .find(|(_, set)| set.contains(&pred))
            .map(|(&c, _)| c)
    }
}

/// True iff the predicted quadrant is acceptable for the gold
/// benchmark class.
pub fn map_benchmark(
    gold: BenchmarkClass,
    pred: EmotionClass,
    map: &BenchmarkTaxonomyMap,
) -> Result<bool> {
    map.accept_set(gold)
        .map(|set| set.contains(&pred))
        .ok_or_else(|| Error::UnknownBenchmarkClass(gold.as_str().to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkItem {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    pub label: BenchmarkClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkClassRow {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub per_class: Vec<BenchmarkClassRow>,
    pub micro_f: f64,
    pub n: u64,
}

/// Classifies each item with the model and scores it through the
/// taxonomy map. A prediction falling in some accept-set counts toward
/// that benchmark class; a prediction outside every accept-set counts
/// as a missed gold item only.
pub fn evaluate_benchmark(
    model: &Model,
    vocab: &Vocabulary,
    items: &[BenchmarkItem],
    map: &BenchmarkTaxonomyMap,
) -> Result<BenchmarkReport> {
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_classes = BenchmarkClass::ALL.len();
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fn_ = vec![0u64; n_classes];
    let mut support = vec![0u64; n_classes];
    let max_len = model.encoder_config.max_len;
    for item in items {
        let (pred, _) = predict(model, &item.text, vocab, max_len)?;
        let gold = item.label;
        support[gold.index()] += 1;
        match map.class_of(pred) {
            Some(p) if p == gold => tp[gold.index()] += 1,
            Some(p) => {
                fp[p.index()] += 1;
                fn_[gold.index()] += 1;
            }
            None => fn_[gold.index()] += 1,
        }
    }
    let per_class = BenchmarkClass::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            let p = ratio(tp[i], tp[i] + fp[i]);
            let r = ratio(tp[i], tp[i] + fn_[i]);
            BenchmarkClassRow {
                class: c.as_str().to_string(),
                precision: p,
                recall: r,
                f1: f1_of(p, r),
                support: support[i],
            }
        })
        .collect();
    let (stp, sfp, sfn): (u64, u64, u64) =
        (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let micro_f = if 2 * stp + sfp + sfn == 0 {
        0.0
    } else {
        2.0 * stp as f64 / (2 * stp + sfp + sfn) as f64
    };
    Ok(BenchmarkReport { per_class, micro_f, n: items.len() as u64 })
}

/// Two-tailed paired Student t-test. Returns (t, p) with n-1 degrees
/// of freedom.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidSpec("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidSpec(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AblationPoint {
    pub size: usize,
    pub micro_f: f64,
}

/// Everything an ablation point needs: the starting model, the
/// fine-tune configuration, the full training pool, and the fixed
/// validation and test sets.
pub struct AblationSetup<'a> {
    pub base_model: &'a Model,
    pub ftconf: FineTuneConfig,
    pub train: &'a [Example],
    pub val: &'a [Example],
    pub test: &'a [Example],
    pub seed: u64,
}

/// Fine-tunes a fresh copy of the base model on a seeded subsample per
/// size and scores it on the shared test set.
pub fn ablation(setup: &AblationSetup, sizes: &[usize]) -> Result<Vec<AblationPoint>> {
    let mut points = Vec::with_capacity(sizes.len());
    for (idx, &size) in sizes.iter().enumerate() {
        if size > setup.train.len() {
            return Err(Error::SizeTooLarge(size, setup.train.len()));
        }
        let mut order: Vec<usize> = (0..setup.train.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(setup.seed.wrapping_add(idx as u64));
        order.shuffle(&mut rng);
        let subset: Vec<Example> = order[..size]
            .iter()
            .map(|&i| setup.train[i].clone())
            .collect();
        let mut model = setup.base_model.clone();
        fine_tune(&mut model, &subset, setup.val, &setup.ftconf)?;
        points.push(AblationPoint { size, micro_f: micro_f(&model, setup.test)? });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_diagonal_and_empty() {
        let preds = vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1];
        let m = confusion(&preds, &preds, 4).unwrap();
        assert_eq!(m.trace(), 10);
        assert_eq!(m.total(), 10);

        let m = confusion(&[], &[], 4).unwrap();
        assert_eq!(m.total(), 0);
    }

    #[test]
    fn confusion_manual_count() {
        // preds [A,A,B], golds [A,B,B]
        let m = confusion(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.get(1, 1), 1);
    }

    #[test]
    fn confusion_is_order_invariant() {
        let a = confusion(&[0, 1, 2], &[0, 0, 2], 3).unwrap();
        let b = confusion(&[2, 0, 1], &[2, 0, 0], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(matches!(
            confusion(&[0], &[0, 1], 2),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn metrics_perfect_diagonal() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        let r = metrics(&m).unwrap();
        assert_eq!(r.micro_f, 1.0);
        assert_eq!(r.accuracy, 1.0);
        for c in &r.per_class {
            assert_eq!(c.f1, 1.0);
        }
    }

    #[test]
    fn metrics_pooled_counts() {
        // preds [A,A,B], golds [A,B,B]: pooled TP=2, FP=1, FN=1
        let m = confusion(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        let r = metrics(&m).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.micro_f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_empty_is_error() {
        let m = ConfusionMatrix::new(3);
        assert!(matches!(metrics(&m), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn taxonomy_truth_table() {
        let map = BenchmarkTaxonomyMap::canonical();
        let rows = [
            (BenchmarkClass::Joy, EmotionClass::HappyActive, true),
            (BenchmarkClass::Joy, EmotionClass::HappyInactive, true),
            (BenchmarkClass::Anger, EmotionClass::UnhappyActive, true),
            (BenchmarkClass::Anger, EmotionClass::UnhappyInactive, false),
            (BenchmarkClass::Sadness, EmotionClass::UnhappyInactive, true),
            (BenchmarkClass::Sadness, EmotionClass::UnhappyActive, false),
        ];
        for (gold, pred, want) in rows {
            assert_eq!(map_benchmark(gold, pred, &map).unwrap(), want, "{gold:?}/{pred:?}");
        }
    }

    #[test]
    fn canonical_accept_sets_partition_the_quadrants() {
        let map = BenchmarkTaxonomyMap::canonical();
        let mut seen = BTreeSet::new();
        let mut sizes = Vec::new();
        for c in BenchmarkClass::ALL {
            let set = map.accept_set(c).unwrap();
            sizes.push(set.len());
            for &e in set {
                assert!(seen.insert(e), "{e} appears in two accept-sets");
            }
        }
        assert_eq!(seen.len(), 4);
        assert_eq!(sizes, vec![2, 1, 1]);
    }

    #[test]
    fn ttest_hand_example() {
        // diffs [0,0,0,-1]: |t| = 1, df 3, two-tailed p ~ 0.391
        let (t, p) = paired_ttest(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((t.abs() - 1.0).abs() < 1e-12);
        assert!((p - 0.391).abs() < 2e-3, "p = {p}");
    }

    #[test]
    fn ttest_degenerate_and_symmetry() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(paired_ttest(&a, &a), Err(Error::DegenerateSample)));

        let b = [1.5, 1.9, 3.4];
        let (t1, p1) = paired_ttest(&a, &b).unwrap();
        let (t2, p2) = paired_ttest(&b, &a).unwrap();
        assert!((t1 + t2).abs() < 1e-12);
        assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn ttest_strong_difference_is_significant() {
        let a = [10.0, 10.1, 9.9, 10.05, 9.95, 10.02];
        let b = [0.0, 0.2, -0.1, 0.0, -0.05, 0.1];
        let (_, p) = paired_ttest(&a, &b).unwrap();
        assert!(p < 0.01);
    }
}
