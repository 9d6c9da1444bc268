//! Token vocabularies and whitespace tokenization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Surface form of the end-of-sequence token.
pub const EOS: &str = "<eos>";

/// Dense bidirectional map between surface strings and token ids.
///
/// Ids are contiguous from 0 and never reused. Exactly one token is the
/// end-of-sequence marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    eos: TokenId,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(repr: VocabularyRepr) -> Result<Self> {
        let eos_word = repr
            .tokens
            .get(repr.eos as usize)
            .cloned()
            .ok_or(Error::InvalidToken {
                id: repr.eos,
                vocab_size: repr.tokens.len(),
            })?;
        Vocabulary::from_tokens(repr.tokens, &eos_word)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            eos: v.eos,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list. `eos` must be one of
    /// the tokens; duplicates are rejected.
    pub fn from_tokens<I, S>(tokens: I, eos: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() >= TokenId::MAX as usize {
            return Err(Error::Capacity {
                what: "vocabulary",
                requested: tokens.len(),
                limit: TokenId::MAX as usize - 1,
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        let eos = *index
            .get(eos)
            .ok_or_else(|| Error::UnknownToken(eos.to_string()))?;
        Ok(Vocabulary { tokens, index, eos })
    }

    /// `<eos>` at id 0 followed by `words` in first-seen order, skipping
    /// repeats.
    pub fn with_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary {
            tokens: vec![EOS.to_string()],
            index: HashMap::from([(EOS.to_string(), 0)]),
            eos: 0,
        };
        for w in words {
            let w = w.as_ref();
            if !v.index.contains_key(w) {
                v.push_unchecked(w.to_string());
            }
        }
        v
    }

    fn push_unchecked(&mut self, word: String) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.index.insert(word.clone(), id);
        self.tokens.push(word);
        id
    }

    /// Appends a new word at the next id.
    pub fn push(&mut self, word: &str) -> Result<TokenId> {
        if self.index.contains_key(word) {
            return Err(Error::Data(format!("{word:?} is already in the vocabulary")));
        }
        Ok(self.push_unchecked(word.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    /// Like [`Vocabulary::id`] but reports unknown words as errors.
    pub fn require(&self, word: &str) -> Result<TokenId> {
        self.id(word)
            .ok_or_else(|| Error::UnknownToken(word.to_string()))
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidToken {
                id,
                vocab_size: self.len(),
            })
        }
    }

    /// Maps words to ids, failing on the first unknown word.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<TokenId>> {
        words.iter().map(|w| self.require(w.as_ref())).collect()
    }

    /// Joins the surface forms of `ids` with single spaces, dropping the
    /// end-of-sequence marker.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id != self.eos)
            .map(|&id| self.word(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Lower-cases and splits on Unicode whitespace. No other normalization is
/// applied.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("A Man on a Bus"), ["a", "man", "on", "a", "bus"]);
        assert_eq!(tokenize("  a\t b "), ["a", "b"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
    }

    #[test]
    fn tokenize_round_trips_modulo_case_and_spacing() {
        let line = "The  Quick\tbrown   FOX";
        let joined = tokenize(line).join(" ");
        let normalized = line.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        assert_eq!(joined, normalized);
        assert_eq!(tokenize(&joined), tokenize(line));
    }

    #[test]
    fn ids_are_dense_and_invertible() {
        let v = Vocabulary::with_words(["a", "b", "a", "c"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.eos(), 0);
        for (id, w) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(w), Some(id as TokenId));
            assert_eq!(v.word(id as TokenId), Some(w.as_str()));
        }
    }

    #[test]
    fn from_tokens_rejects_duplicates_and_missing_eos() {
        assert!(Vocabulary::from_tokens(["a", "a", EOS], EOS).is_err());
        assert!(matches!(
            Vocabulary::from_tokens(["a", "b"], EOS),
            Err(Error::UnknownToken(_))
        ));
        let v = Vocabulary::from_tokens(["a", "b", EOS], EOS).unwrap();
        assert_eq!(v.eos(), 2);
    }

    #[test]
    fn serde_preserves_ids() {
        let v = Vocabulary::from_tokens(["x", EOS, "y"], EOS).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.eos(), 1);
    }

    #[test]
    fn render_drops_eos() {
        let v = Vocabulary::with_words(["a", "cat"]);
        assert_eq!(v.render(&[1, 2, 0]), "a cat");
    }
}
