//! Raw message ingestion: cleaning, distant hashtag labeling,
//! deduplication, and seeded train/validation/test splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four Circumplex quadrant labels.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum EmotionClass {
    HappyActive,
    HappyInactive,
    UnhappyActive,
    UnhappyInactive,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; 4] = [
        EmotionClass::HappyActive,
        EmotionClass::HappyInactive,
        EmotionClass::UnhappyActive,
        EmotionClass::UnhappyInactive,
    ];

    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or(Error::LabelOutOfRange(i, Self::COUNT))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionClass::HappyActive => "happy_active",
            EmotionClass::HappyInactive => "happy_inactive",
            EmotionClass::UnhappyActive => "unhappy_active",
            EmotionClass::UnhappyInactive => "unhappy_inactive",
        }
    }
}

impl std::fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawMessage {
    pub id: String,
    pub text: String,
}

/// Hashtag sets per class, lowercase and without the leading '#'.
/// The sets must be pairwise disjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<EmotionClass, BTreeSet<String>>")]
#[serde(into = "BTreeMap<EmotionClass, BTreeSet<String>>")]
pub struct HashtagLexicon {
    sets: BTreeMap<EmotionClass, BTreeSet<String>>,
}

impl HashtagLexicon {
    pub fn new(sets: BTreeMap<EmotionClass, BTreeSet<String>>) -> Result<Self> {
        let mut seen: BTreeMap<&str, EmotionClass> = BTreeMap::new();
        for (&class, tags) in &sets {
            for tag in tags {
                if tag.is_empty()
                    || tag.chars().any(|c| c.is_whitespace())
                    || tag.chars().any(|c| c.is_uppercase())
                {
                    return Err(Error::InvalidLexicon(format!(
                        "tag `{tag}` must be lowercase without whitespace"
                    )));
                }
                if let Some(prev) = seen.insert(tag, class) {
                    return Err(Error::InvalidLexicon(format!(
                        "tag `{tag}` appears in both {prev} and {class}"
                    )));
                }
            }
        }
        Ok(HashtagLexicon { sets })
    }

    pub fn class_of(&self, tag: &str) -> Option<EmotionClass> {
        self.sets
            .iter()
            .find(|(_, tags)| tags.contains(tag))
            .map(|(&c, _)| c)
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.class_of(tag).is_some()
    }

    pub fn tags(&self, class: EmotionClass) -> impl Iterator<Item = &str> {
        self.sets.get(&class).into_iter().flatten().map(|s| s.as_str())
    }
}

impl TryFrom<BTreeMap<EmotionClass, BTreeSet<String>>> for HashtagLexicon {
    type Error = Error;
    fn try_from(sets: BTreeMap<EmotionClass, BTreeSet<String>>) -> Result<Self> {
        HashtagLexicon::new(sets)
    }
}

impl From<HashtagLexicon> for BTreeMap<EmotionClass, BTreeSet<String>> {
    fn from(l: HashtagLexicon) -> Self {
        l.sets
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMessage {
    pub id: String,
    #[serde(rename = "text")]
    pub clean_text: String,
    pub label: EmotionClass,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub messages: Vec<LabeledMessage>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<EmotionClass, usize> {
        let mut counts: BTreeMap<EmotionClass, usize> =
            EmotionClass::ALL.iter().map(|&c| (c, 0)).collect();
        for m in &self.messages {
            *counts.get_mut(&m.label).unwrap() += 1;
        }
        counts
    }
}

/// Split fractions plus the shuffle seed. Fractions must be
/// non-negative and sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train_fraction: train,
            val_fraction: val,
            test_fraction: test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The default 0.555 / 0.111 / 0.334 proportions.
    pub fn default_fractions(seed: u64) -> Self {
        SplitSpec {
            train_fraction: 0.555,
            val_fraction: 0.111,
            test_fraction: 0.334,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fs = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fs.iter().any(|f| *f < 0.0 || !f.is_finite()) {
            return Err(Error::InvalidSpec("fractions must be non-negative".into()));
        }
        let sum: f64 = fs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Lowercases, strips URL and @-mention tokens, drops non-ASCII
/// characters, collapses character runs of three or more to two, and
/// normalizes whitespace. Idempotent.
pub fn clean_text(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out: Vec<String> = Vec::new();
    for tok in lower.split_whitespace() {
        let ascii: String = tok.chars().filter(char::is_ascii).collect();
        let collapsed = collapse_runs(&ascii);
        let urlish = |s: &str| {
            s.starts_with("http") || s.starts_with("www.") || s.starts_with('@')
        };
        if collapsed.is_empty() || urlish(&ascii) || urlish(&collapsed) {
            continue;
        }
        out.push(collapsed);
    }
    out.join(" ")
}

fn collapse_runs(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in s.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= 2 {
            out.push(c);
        }
    }
    out
}

/// True iff the raw text contains a standalone token "rt", case-insensitive.
pub fn is_retweet(text: &str) -> bool {
    text.split_whitespace().any(|t| t.eq_ignore_ascii_case("rt"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelOutcome {
    Single(EmotionClass),
    NoMatch,
    /// Hashtags span two or more classes; the message is dropped.
    Ambiguous,
}

fn hashtags(text: &str) -> Vec<String> {
    // `#` followed by word characters, anywhere in the text
    static PATTERN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = PATTERN.get_or_init(|| regex::Regex::new(r"#(\w+)").unwrap());
    re.captures_iter(&text.to_lowercase())
        .map(|c| c[1].to_string())
        .collect()
}

/// Distant label from the hashtags present in the raw text.
pub fn extract_label(text: &str, lexicon: &HashtagLexicon) -> LabelOutcome {
    let mut classes = BTreeSet::new();
    for tag in hashtags(text) {
        if let Some(c) = lexicon.class_of(&tag) {
            classes.insert(c);
        }
    }
    match classes.len() {
        0 => LabelOutcome::NoMatch,
        1 => LabelOutcome::Single(*classes.iter().next().unwrap()),
        _ => LabelOutcome::Ambiguous,
    }
}

/// Per-rule drop counts from `build_dataset`.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BuildStats {
    pub retweets: usize,
    pub unlabeled: usize,
    pub ambiguous: usize,
    pub duplicates: usize,
}

/// Filters retweets, assigns distant labels, cleans text, strips
/// lexicon hashtags out of the cleaned text, and deduplicates on the
/// cleaned text (first occurrence wins).
pub fn build_dataset(
    messages: &[RawMessage],
    lexicon: &HashtagLexicon,
) -> Result<(Dataset, BuildStats)> {
    let mut stats = BuildStats::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for msg in messages {
        if is_retweet(&msg.text) {
            stats.retweets += 1;
            continue;
        }
        let label = match extract_label(&msg.text, lexicon) {
            LabelOutcome::Single(c) => c,
            LabelOutcome::NoMatch => {
                stats.unlabeled += 1;
                continue;
            }
            LabelOutcome::Ambiguous => {
                stats.ambiguous += 1;
                continue;
            }
        };
        let clean = strip_label_hashtags(&clean_text(&msg.text), lexicon);
        if !seen.insert(clean.clone()) {
            stats.duplicates += 1;
            continue;
        }
        out.push(LabeledMessage { id: msg.id.clone(), clean_text: clean, label });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((Dataset { messages: out }, stats))
}

/// Removes tokens whose hashtag word belongs to the lexicon, so the
/// distant label cannot leak into the training text.
fn strip_label_hashtags(clean: &str, lexicon: &HashtagLexicon) -> String {
    clean
        .split_whitespace()
        .filter(|tok| {
            if let Some(rest) = tok.strip_prefix('#') {
                let word: String = rest
                    .chars()
                    .take_while(|c| c.is_alphanumeric() || *c == '_')
                    .collect();
                !lexicon.contains(&word)
            } else {
                true
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Seeded shuffle then floor-rule cut: train and validation get
/// floor(fraction * N) items, the remainder goes to test.
pub fn split_dataset(
    dataset: &Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let n_train = (spec.train_fraction * n as f64).floor() as usize;
    let n_val = (spec.val_fraction * n as f64).floor() as usize;
    let pick = |range: &[usize]| Dataset {
        messages: range.iter().map(|&i| dataset.messages[i].clone()).collect(),
    };
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}
