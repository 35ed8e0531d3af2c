//! Deterministic synthetic corpus generator: four-class
//! keyword-template sentences with class-specific keyword and context
//! vocabularies over a shared filler vocabulary. Used by the demo
//! pipeline and the verification suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::{EmotionClass, HashtagLexicon, RawMessage};
use crate::eval::{BenchmarkClass, BenchmarkItem};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub keywords_per_class: usize,
    pub context_per_class: usize,
    pub filler_words: usize,
    pub min_content: usize,
    pub max_content: usize,
}

impl Default for SyntheticConfig {
    /// Roughly a 500-word vocabulary: 4 * (12 + 15) class words plus
    /// ~390 fillers.
    fn default() -> Self {
        SyntheticConfig {
            keywords_per_class: 12,
            context_per_class: 15,
            filler_words: 392,
            min_content: 3,
            max_content: 8,
        }
    }
}

fn class_letter(class: EmotionClass) -> char {
    match class {
        EmotionClass::HappyActive => 'a',
        EmotionClass::HappyInactive => 'b',
        EmotionClass::UnhappyActive => 'c',
        EmotionClass::UnhappyInactive => 'd',
    }
}

impl SyntheticConfig {
    pub fn keywords(&self, class: EmotionClass) -> Vec<String> {
        let l = class_letter(class);
        (0..self.keywords_per_class).map(|i| format!("k{l}{i:02}")).collect()
    }

    pub fn context_words(&self, class: EmotionClass) -> Vec<String> {
        let l = class_letter(class);
        (0..self.context_per_class).map(|i| format!("x{l}{i:02}")).collect()
    }

    /// Filler words shared by all classes; spelled with letters only so
    /// no generated token contains a three-character run.
    pub fn fillers(&self) -> Vec<String> {
        (0..self.filler_words)
            .map(|i| {
                let a = (b'a' + (i / 26) as u8 % 22) as char; // a..v
                let b = (b'a' + (i % 26) as u8) as char;
                format!("w{a}{b}{}", i / 572)
            })
            .collect()
    }

    /// Distant-label hashtags, three per class, disjoint from all
    /// content words.
    pub fn lexicon(&self) -> HashtagLexicon {
        let sets = EmotionClass::ALL
            .iter()
            .map(|&c| {
                let l = class_letter(c);
                let tags = (1..=3).map(|i| format!("tag{l}{i}")).collect();
                (c, tags)
            })
            .collect();
        HashtagLexicon::new(sets).expect("generated tags are disjoint")
    }

    fn sentence(&self, class: EmotionClass, rng: &mut ChaCha20Rng) -> String {
        let keywords = self.keywords(class);
        let context = self.context_words(class);
        let fillers = self.fillers();
        let n_kw = rng.gen_range(1..=2usize);
        let n_ctx = rng.gen_range(1..=3usize);
        let budget = rng.gen_range(self.min_content..=self.max_content);
        let n_fill = budget.saturating_sub(n_kw + n_ctx).max(1);
        let mut tokens: Vec<String> = Vec::new();
        for _ in 0..n_kw {
            tokens.push(keywords[rng.gen_range(0..keywords.len())].clone());
        }
        for _ in 0..n_ctx {
            tokens.push(context[rng.gen_range(0..context.len())].clone());
        }
        for _ in 0..n_fill {
            tokens.push(fillers[rng.gen_range(0..fillers.len())].clone());
        }
        // deterministic order shuffle
        for i in (1..tokens.len()).rev() {
            tokens.swap(i, rng.gen_range(0..=i));
        }
        tokens.join(" ")
    }
}

/// Cleaned sentences with their generating class, classes cycled
/// round-robin for balance.
pub fn generate_labeled(
    cfg: &SyntheticConfig,
    n: usize,
    seed: u64,
) -> Vec<(String, EmotionClass)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = EmotionClass::ALL[i % 4];
            (cfg.sentence(class, &mut rng), class)
        })
        .collect()
}

/// Unlabeled sentences for pretraining, drawn from the same templates.
pub fn generate_unlabeled(cfg: &SyntheticConfig, n: usize, seed: u64) -> Vec<String> {
    generate_labeled(cfg, n, seed).into_iter().map(|(s, _)| s).collect()
}

/// Raw messages carrying distant-label hashtags, with optional noise:
/// uppercase, character elongation, URLs, mentions, retweets, and
/// ambiguous double-tagged messages.
pub fn generate_raw(
    cfg: &SyntheticConfig,
    n: usize,
    seed: u64,
    noise: bool,
) -> Vec<RawMessage> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let lexicon = cfg.lexicon();
    (0..n)
        .map(|i| {
            let class = EmotionClass::ALL[i % 4];
            let mut text = cfg.sentence(class, &mut rng);
            if noise {
                if rng.gen_bool(0.15) {
                    text = text.to_uppercase();
                }
                if rng.gen_bool(0.1) {
                    text.push_str("eee");
                }
                if rng.gen_bool(0.1) {
                    text.push_str(" http://t.co/xyz");
                }
                if rng.gen_bool(0.1) {
                    text.push_str(" @someone");
                }
            }
            let tags: Vec<&str> = lexicon.tags(class).collect();
            text.push_str(&format!(" #{}", tags[rng.gen_range(0..tags.len())]));
            if noise && rng.gen_bool(0.05) {
                // second tag from another class makes the label ambiguous
                let other = EmotionClass::ALL[(class.index() + 1) % 4];
                let other_tags: Vec<&str> = lexicon.tags(other).collect();
                text.push_str(&format!(" #{}", other_tags[0]));
            }
            if noise && rng.gen_bool(0.05) {
                text = format!("RT {text}");
            }
            RawMessage { id: format!("syn{i:06}"), text }
        })
        .collect()
}

/// Benchmark items in the three-class external taxonomy; joy items are
/// drawn from both happy quadrants.
pub fn generate_benchmark(cfg: &SyntheticConfig, n: usize, seed: u64) -> Vec<BenchmarkItem> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = BenchmarkClass::ALL[i % 3];
            let class = match label {
                BenchmarkClass::Joy => {
                    if rng.gen_bool(0.5) {
                        EmotionClass::HappyActive
                    } else {
                        EmotionClass::HappyInactive
                    }
                }
                BenchmarkClass::Anger => EmotionClass::UnhappyActive,
                BenchmarkClass::Sadness => EmotionClass::UnhappyInactive,
            };
            BenchmarkItem {
                id: Some(format!("bench{i:05}")),
                text: cfg.sentence(class, &mut rng),
                label,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::clean_text;

    #[test]
    fn sentences_survive_cleaning_unchanged() {
        let cfg = SyntheticConfig::default();
        for (s, _) in generate_labeled(&cfg, 200, 1) {
            assert_eq!(clean_text(&s), s, "sentence {s:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig::default();
        assert_eq!(generate_labeled(&cfg, 50, 7), generate_labeled(&cfg, 50, 7));
        assert_ne!(generate_labeled(&cfg, 50, 7), generate_labeled(&cfg, 50, 8));
    }

    #[test]
    fn class_vocabularies_are_disjoint() {
        let cfg = SyntheticConfig::default();
        let mut all: Vec<String> = Vec::new();
        for c in EmotionClass::ALL {
            all.extend(cfg.keywords(c));
            all.extend(cfg.context_words(c));
        }
        all.extend(cfg.fillers());
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn labeled_classes_are_balanced() {
        let cfg = SyntheticConfig::default();
        let data = generate_labeled(&cfg, 40, 2);
        for c in EmotionClass::ALL {
            assert_eq!(data.iter().filter(|(_, l)| *l == c).count(), 10);
        }
    }

    #[test]
    fn raw_messages_carry_class_hashtags() {
        let cfg = SyntheticConfig::default();
        let lex = cfg.lexicon();
        let raws = generate_raw(&cfg, 20, 3, false);
        for (i, msg) in raws.iter().enumerate() {
            let want = EmotionClass::ALL[i % 4];
            match crate::corpus::extract_label(&msg.text, &lex) {
                crate::corpus::LabelOutcome::Single(c) => assert_eq!(c, want),
                other => panic!("unexpected outcome {other:?} for {}", msg.text),
            }
        }
    }
}
