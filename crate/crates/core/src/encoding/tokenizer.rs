use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::TokenId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub begin: TokenId,
    /// Separator, also used as the end-of-sequence marker.
    pub sep: TokenId,
    pub mask: TokenId,
    pub pad: TokenId,
    pub unk: TokenId,
}

pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId>;
    fn special(&self) -> SpecialIds;
    fn vocab_size(&self) -> usize;
    fn token(&self, id: TokenId) -> Option<&str>;
}

pub const BEGIN: &str = "<s>";
pub const PAD: &str = "<pad>";
pub const SEP: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const MASK: &str = "<mask>";
const SPECIALS: [&str; 5] = [BEGIN, PAD, SEP, UNK, MASK];

/// Greedy longest-match-first subword tokenizer. Continuation pieces carry
/// a `##` prefix. Words are split on whitespace, and punctuation characters
/// become tokens of their own.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPieceTokenizer {
    vocab: Vec<String>,
    ids: HashMap<String, TokenId>,
    special: SpecialIds,
    max_word_chars: usize,
}

impl WordPieceTokenizer {
    pub fn from_vocab<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(vocab.len());
        for (i, t) in vocab.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("vocabulary entry {i} is empty or contains whitespace")));
            }
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        let get = |s: &str| {
            ids.get(s)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocabulary lacks special token `{s}`")))
        };
        let special = SpecialIds {
            begin: get(BEGIN)?,
            sep: get(SEP)?,
            mask: get(MASK)?,
            pad: get(PAD)?,
            unk: get(UNK)?,
        };
        Ok(WordPieceTokenizer {
            vocab,
            ids,
            special,
            max_word_chars: 100,
        })
    }

    /// Vocabulary of the special tokens, every whole word of `texts`, and the
    /// given extra pieces (which may use the `##` continuation prefix).
    pub fn from_corpus<'a, T, P>(texts: T, extra_pieces: P) -> Result<Self>
    where
        T: IntoIterator<Item = &'a str>,
        P: IntoIterator<Item = &'a str>,
    {
        let mut words = BTreeSet::new();
        for t in texts {
            for w in pre_tokenize(t) {
                words.insert(w.to_string());
            }
        }
        for p in extra_pieces {
            words.insert(p.to_string());
        }
        for s in SPECIALS {
            words.remove(s);
        }
        Self::from_vocab(SPECIALS.iter().map(|s| s.to_string()).chain(words))
    }

    /// One token per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_vocab(text.lines().filter(|l| !l.is_empty()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.vocab.join("\n");
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    fn encode_word(&self, word: &str, out: &mut Vec<TokenId>) {
        if let Some(&id) = self.ids.get(word) {
            out.push(id);
            return;
        }
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > self.max_word_chars {
            out.push(self.special.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let b0 = chars[start].0;
                let b1 = chars.get(end).map_or(word.len(), |c| c.0);
                let piece = &word[b0..b1];
                let key = if start == 0 {
                    piece.to_string()
                } else {
                    format!("##{piece}")
                };
                if let Some(&id) = self.ids.get(&key) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.special.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

fn pre_tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().flat_map(split_punct)
}

fn split_punct(word: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in word.char_indices() {
        if c.is_ascii_punctuation() || matches!(c, '„' | '“' | '”' | '‚' | '‘' | '’' | '–' | '—' | '«' | '»') {
            if start < i {
                out.push(&word[start..i]);
            }
            out.push(&word[i..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
    }
    if start < word.len() {
        out.push(&word[start..]);
    }
    out
}

impl Tokenizer for WordPieceTokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for w in pre_tokenize(text) {
            self.encode_word(w, &mut out);
        }
        out
    }

    fn special(&self) -> SpecialIds {
        self.special
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn token(&self, id: TokenId) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> WordPieceTokenizer {
        WordPieceTokenizer::from_corpus(
            ["Die Ukraine braucht Waffen.", "Scholz zögert"],
            ["argument", "##iert", "wider", "##spr", "##icht"],
        )
        .unwrap()
    }

    fn words(t: &WordPieceTokenizer, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| t.token(i).unwrap().to_string()).collect()
    }

    #[test]
    fn splits_punctuation_and_subwords() {
        let t = tok();
        assert_eq!(words(&t, &t.encode("Die Ukraine braucht Waffen.")), ["Die", "Ukraine", "braucht", "Waffen", "."]);
        assert_eq!(words(&t, &t.encode("argumentiert")), ["argument", "##iert"]);
        assert_eq!(words(&t, &t.encode("widerspricht")), ["wider", "##spr", "##icht"]);
    }

    #[test]
    fn unknown_words_become_unk() {
        let t = tok();
        assert_eq!(t.encode("Zebra"), vec![t.special().unk]);
        assert_eq!(t.encode("argumentx"), vec![t.special().unk]);
    }

    #[test]
    fn specials_are_distinct_and_roundtrip_through_file() {
        let t = tok();
        let s = t.special();
        let set: BTreeSet<_> = [s.begin, s.sep, s.mask, s.pad, s.unk].into_iter().collect();
        assert_eq!(set.len(), 5);
        let f = tempfile::NamedTempFile::new().unwrap();
        t.save(f.path()).unwrap();
        assert_eq!(WordPieceTokenizer::load(f.path()).unwrap(), t);
    }

    #[test]
    fn vocab_without_specials_is_rejected() {
        assert!(WordPieceTokenizer::from_vocab(["a", "b"]).is_err());
        assert!(WordPieceTokenizer::from_vocab([BEGIN, PAD, SEP, UNK, MASK, "a", "a"]).is_err());
    }
}
