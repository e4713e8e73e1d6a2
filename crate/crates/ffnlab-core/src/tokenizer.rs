//! Byte-level and trained byte-pair tokenizers.
//!
//! The byte-level tokenizer has a fixed 259-entry vocabulary: the 256 raw
//! bytes plus BOS/EOS/PAD specials. The BPE variant starts from the same
//! byte base, learns merge rules from a corpus, and keeps the three
//! specials at the top of the id space. Both decode(encode(s)) = s for any
//! valid UTF-8 input, since every byte is representable.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

pub const BYTE_BASE: usize = 256;
pub const SPECIAL_COUNT: usize = 3;
/// Vocabulary size of the plain byte-level tokenizer.
pub const BYTE_VOCAB: usize = BYTE_BASE + SPECIAL_COUNT;

/// Serializable tokenizer description (the on-disk artifact).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    Byte,
    Bpe { merges: Vec<(u32, u32)> },
}

pub struct Tokenizer {
    spec: TokenizerSpec,
    /// Merge rank lookup for encoding: (left, right) -> merged id.
    ranks: BTreeMap<(u32, u32), u32>,
    /// Byte expansion of every non-special token id.
    expansions: Vec<Vec<u8>>,
}

impl Tokenizer {
    pub fn byte_level() -> Self {
        Self::from_spec(TokenizerSpec::Byte)
    }

    pub fn from_spec(spec: TokenizerSpec) -> Self {
        let merges: &[(u32, u32)] = match &spec {
            TokenizerSpec::Byte => &[],
            TokenizerSpec::Bpe { merges } => merges,
        };
        let mut expansions: Vec<Vec<u8>> = (0..=255u8).map(|b| alloc::vec![b]).collect();
        let mut ranks = BTreeMap::new();
        for (i, &(a, b)) in merges.iter().enumerate() {
            let id = (BYTE_BASE + i) as u32;
            let mut bytes = expansions[a as usize].clone();
            bytes.extend_from_slice(&expansions[b as usize]);
            expansions.push(bytes);
            ranks.insert((a, b), id);
        }
        Tokenizer { spec, ranks, expansions }
    }

    pub fn spec(&self) -> &TokenizerSpec {
        &self.spec
    }

    pub fn vocab_size(&self) -> usize {
        self.expansions.len() + SPECIAL_COUNT
    }

    pub fn bos_id(&self) -> u32 {
        self.expansions.len() as u32
    }

    pub fn eos_id(&self) -> u32 {
        self.expansions.len() as u32 + 1
    }

    pub fn pad_id(&self) -> u32 {
        self.expansions.len() as u32 + 2
    }

    /// Text to token ids. Never emits specials.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = text.bytes().map(u32::from).collect();
        if self.ranks.is_empty() {
            return ids;
        }
        // Standard BPE encode: repeatedly apply the lowest-id (earliest
        // learned) merge present in the sequence.
        loop {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..ids.len().saturating_sub(1) {
                if let Some(&merged) = self.ranks.get(&(ids[i], ids[i + 1])) {
                    if best.is_none_or(|(m, _)| merged < m) {
                        best = Some((merged, i));
                    }
                }
            }
            match best {
                Some((merged, at)) => {
                    ids[at] = merged;
                    ids.remove(at + 1);
                }
                None => return ids,
            }
        }
    }

    /// Token ids back to text. Specials decode to nothing; ids outside the
    /// vocabulary are an error.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::new();
        for &id in ids {
            let id = id as usize;
            if id < self.expansions.len() {
                bytes.extend_from_slice(&self.expansions[id]);
            } else if id >= self.vocab_size() {
                return Err(CoreError::Index { what: "token", index: id, bound: self.vocab_size() });
            }
        }
        String::from_utf8(bytes)
            .map_err(|e| CoreError::Format(alloc::format!("decoded bytes are not UTF-8: {e}")))
    }
}

/// Learns BPE merges from `corpus` until the vocabulary reaches
/// `target_vocab` (bytes + merges + specials) or no pair repeats.
pub fn train_bpe(corpus: &str, target_vocab: usize) -> Result<TokenizerSpec> {
    if target_vocab < BYTE_VOCAB {
        return Err(CoreError::Config(alloc::format!(
            "target vocabulary {target_vocab} is below the byte baseline {BYTE_VOCAB}"
        )));
    }
    let mut ids: Vec<u32> = corpus.bytes().map(u32::from).collect();
    let mut merges = Vec::new();
    while BYTE_VOCAB + merges.len() < target_vocab {
        let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for pair in ids.windows(2) {
            *counts.entry((pair[0], pair[1])).or_insert(0) += 1;
        }
        // Most frequent pair; ties break toward the lexicographically
        // smallest pair so training is deterministic.
        let best = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&p, &c)| (p, c));
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let merged = (BYTE_BASE + merges.len()) as u32;
        merges.push(pair);
        let mut next = Vec::with_capacity(ids.len());
        let mut i = 0;
        while i < ids.len() {
            if i + 1 < ids.len() && (ids[i], ids[i + 1]) == pair {
                next.push(merged);
                i += 2;
            } else {
                next.push(ids[i]);
                i += 1;
            }
        }
        ids = next;
    }
    Ok(TokenizerSpec::Bpe { merges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    #[test]
    fn empty_string_roundtrips() {
        let tok = Tokenizer::byte_level();
        let ids = tok.encode("");
        assert!(ids.is_empty());
        assert_eq!(tok.decode(&ids).unwrap(), "");
    }

    #[test]
    fn byte_level_is_byte_identity() {
        let tok = Tokenizer::byte_level();
        assert_eq!(tok.encode("ab"), alloc::vec![97, 98]);
        assert_eq!(tok.vocab_size(), 259);
        assert_eq!(tok.bos_id(), 256);
        assert_eq!(tok.eos_id(), 257);
        assert_eq!(tok.pad_id(), 258);
    }

    #[test]
    fn decode_rejects_out_of_vocab_id() {
        let tok = Tokenizer::byte_level();
        assert!(matches!(tok.decode(&[259]), Err(CoreError::Index { .. })));
    }

    #[test]
    fn decode_skips_specials() {
        let tok = Tokenizer::byte_level();
        let mut ids = tok.encode("hi");
        ids.push(tok.eos_id());
        assert_eq!(tok.decode(&ids).unwrap(), "hi");
    }

    #[test]
    fn bpe_learns_frequent_pairs_and_roundtrips() {
        let corpus = "the cat sat on the mat, the cat sat on the mat";
        let spec = train_bpe(corpus, 275).unwrap();
        let tok = Tokenizer::from_spec(spec.clone());
        assert!(tok.vocab_size() > BYTE_VOCAB);
        let ids = tok.encode(corpus);
        assert!(ids.len() < corpus.len(), "merges should shorten the encoding");
        assert_eq!(tok.decode(&ids).unwrap(), corpus);
        // Artifact JSON roundtrip.
        let json = serde_json::to_string(&spec).unwrap();
        let back: TokenizerSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn bpe_training_is_deterministic() {
        let corpus = "aa bb aa bb aa cc";
        let a = train_bpe(corpus, 280).unwrap();
        let b = train_bpe(corpus, 280).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn byte_roundtrip_any_utf8(s in "\\PC*") {
            let tok = Tokenizer::byte_level();
            prop_assert_eq!(tok.decode(&tok.encode(&s)).unwrap(), s.clone());
            for id in tok.encode(&s) {
                prop_assert!((id as usize) < tok.vocab_size());
            }
        }

        #[test]
        fn bpe_roundtrip_any_utf8(s in "\\PC*") {
            let spec = train_bpe("hello world, hello tokens", 270).unwrap();
            let tok = Tokenizer::from_spec(spec);
            prop_assert_eq!(tok.decode(&tok.encode(&s)).unwrap(), s.to_string());
        }
    }
}
