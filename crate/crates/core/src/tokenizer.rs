//! Word-level vocabulary and `[CLS] + text + [SEP]` id encoding with
//! padding masks.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;

pub const RESERVED: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Token/id map with the five reserved ids first. Serialized as a JSON
/// array of tokens in id order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Whitespace-tokenized word vocabulary: tokens below `min_count`
    /// are dropped, the rest are capped at `max_size` total entries
    /// (reserved included) by frequency, ties broken lexicographically.
    pub fn build<'a, I>(corpus: I, min_count: usize, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        assert!(min_count >= 1, "min_count must be at least 1");
        assert!(max_size >= RESERVED.len() + 1, "max_size must exceed the reserved ids");
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for tok in text.split_whitespace() {
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED.len());
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::UnknownId(id))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(&self.tokens).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Ok(Self::from_tokens(tokens))
    }
}

/// Fixed-length id sequence `[CLS] t_1 .. t_m [SEP] PAD ..` with a
/// prefix-of-ones padding mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
}

impl TokenSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of real (masked-in) positions, CLS and SEP included.
    pub fn real_len(&self) -> usize {
        self.mask.iter().map(|&m| m as usize).sum()
    }

    /// Positions holding content tokens (not CLS, SEP, or PAD).
    pub fn content_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.real_len().saturating_sub(1)).filter(move |&i| self.ids[i] != SEP)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("token sequence: {msg}")))
            }
        };
        check(self.ids.len() == self.mask.len(), "ids/mask length mismatch")?;
        check(!self.ids.is_empty() && self.ids[0] == CLS, "first id must be CLS")?;
        let real = self.real_len();
        check(
            self.mask[..real].iter().all(|&m| m == 1)
                && self.mask[real..].iter().all(|&m| m == 0),
            "mask must be a prefix of ones",
        )?;
        let seps = self.ids[..real].iter().filter(|&&i| i == SEP).count();
        check(seps == 1, "exactly one SEP among real positions")?;
        check(
            self.ids[real..].iter().all(|&i| i == PAD),
            "padding positions must hold PAD",
        )?;
        Ok(())
    }
}

/// `[CLS] + token ids + [SEP]`, truncated to `max_len` (trailing text
/// tokens are dropped, SEP is always present) and padded with PAD.
pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    assert!(max_len >= 3, "max_len must allow CLS, one token, and SEP");
    let mut ids = vec![CLS];
    for tok in text.split_whitespace().take(max_len - 2) {
        ids.push(vocab.id(tok).unwrap_or(UNK));
    }
    ids.push(SEP);
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mut mask = vec![1u8; real];
    mask.resize(max_len, 0);
    TokenSequence { ids, mask }
}

/// Inverse of `encode` for in-vocabulary, untruncated text; PAD, CLS
/// and SEP are dropped from the output.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for &id in ids {
        let token = vocab.token(id)?;
        if id == PAD || id == CLS || id == SEP {
            continue;
        }
        out.push(token.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab() -> Vocabulary {
        Vocabulary::build(["i am happy you are sad"], 1, 100)
    }

    #[test]
    fn build_orders_by_frequency_then_token() {
        let v = Vocabulary::build(["a a b"], 1, 100);
        assert_eq!(v.id("a"), Some(5));
        assert_eq!(v.id("b"), Some(6));
        let v = Vocabulary::build(["a a b"], 2, 100);
        assert!(v.id("a").is_some());
        assert!(v.id("b").is_none());
    }

    #[test]
    fn build_caps_at_max_size() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i:03}")).collect();
        let corpus = words.join(" ");
        let v = Vocabulary::build([corpus.as_str()], 1, 20);
        assert_eq!(v.size(), 20);
        assert_eq!(v.token(0).unwrap(), "[PAD]");
        assert_eq!(v.token(4).unwrap(), "[MASK]");
    }

    #[test]
    fn encode_basic() {
        let v = small_vocab();
        let seq = encode("i am happy", &v, 8);
        let (i, am, happy) = (v.id("i").unwrap(), v.id("am").unwrap(), v.id("happy").unwrap());
        assert_eq!(seq.ids, vec![CLS, i, am, happy, SEP, PAD, PAD, PAD]);
        assert_eq!(seq.mask, vec![1, 1, 1, 1, 1, 0, 0, 0]);
        seq.validate().unwrap();
    }

    #[test]
    fn encode_empty_text() {
        let v = small_vocab();
        let seq = encode("", &v, 5);
        assert_eq!(seq.ids, vec![CLS, SEP, PAD, PAD, PAD]);
        seq.validate().unwrap();
    }

    #[test]
    fn encode_truncates_keeping_sep() {
        let v = small_vocab();
        let seq = encode("i am happy you are sad i am happy you", &v, 5);
        assert_eq!(seq.ids.len(), 5);
        assert_eq!(seq.ids[0], CLS);
        assert_eq!(seq.ids[4], SEP);
        assert_eq!(seq.real_len(), 5);
        seq.validate().unwrap();
    }

    #[test]
    fn encode_maps_oov_to_unk() {
        let v = small_vocab();
        let seq = encode("i am ecstatic", &v, 8);
        assert_eq!(seq.ids[3], UNK);
    }

    #[test]
    fn decode_round_trip_and_errors() {
        let v = small_vocab();
        let seq = encode("i am happy", &v, 8);
        assert_eq!(decode(&seq.ids, &v).unwrap(), vec!["i", "am", "happy"]);
        assert_eq!(decode(&[PAD, PAD], &v).unwrap(), Vec::<String>::new());
        let bad = v.size() as u32;
        assert!(matches!(decode(&[bad], &v), Err(Error::UnknownId(_))));
    }

    #[test]
    fn content_positions_skip_specials() {
        let v = small_vocab();
        let seq = encode("i am", &v, 6);
        let pos: Vec<usize> = seq.content_positions().collect();
        assert_eq!(pos, vec![1, 2]);
    }
}
