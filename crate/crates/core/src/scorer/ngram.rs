use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fresh_tag, LogDist, Scorer};
use crate::error::{Error, Result};
use crate::vocab::{tokenize, TokenId, Vocabulary};

/// Sentence-start padding; never emitted and outside every vocabulary.
const START: TokenId = TokenId::MAX;

const FORMAT: &str = "cbsdecode-ngram";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Count-based k-gram model with additive (add-α) smoothing.
///
/// P(w | c) = (count(c, w) + α) / (count(c) + α|V|), where `c` is the last
/// `k - 1` tokens, padded on the left with a start symbol.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: BTreeMap<Vec<TokenId>, ContextCounts>,
    tag: u64,
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.alpha == other.alpha
            && self.vocab == other.vocab
            && self.counts == other.counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramState {
    tag: u64,
    context: Vec<TokenId>,
}

impl NGramModel {
    /// Counts every k-gram of `corpus`. Each sentence must end with the
    /// vocabulary's end-of-sequence token.
    pub fn train(corpus: &[Vec<TokenId>], order: usize, alpha: f64, vocab: Vocabulary) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing constant must be positive, got {alpha}")));
        }
        if corpus.is_empty() {
            return Err(Error::Empty("n-gram training corpus"));
        }
        let mut counts: BTreeMap<Vec<TokenId>, ContextCounts> = BTreeMap::new();
        for (i, sent) in corpus.iter().enumerate() {
            if sent.last() != Some(&vocab.eos()) {
                return Err(Error::Data(format!(
                    "training sentence {i} does not end with the end-of-sequence token"
                )));
            }
            for &t in sent {
                vocab.check(t)?;
            }
            let mut ctx = vec![START; order - 1];
            for &w in sent {
                let entry = counts.entry(ctx.clone()).or_default();
                entry.total += 1;
                *entry.next.entry(w).or_default() += 1;
                if order > 1 {
                    ctx.remove(0);
                    ctx.push(w);
                }
            }
        }
        Ok(NGramModel {
            order,
            alpha,
            vocab,
            counts,
            tag: fresh_tag(),
        })
    }

    /// Tokenizes `lines`, builds the vocabulary in first-seen order (with
    /// `<eos>` at id 0) and trains.
    pub fn train_text<I, S>(lines: I, order: usize, alpha: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences: Vec<Vec<String>> = lines
            .into_iter()
            .map(|l| tokenize(l.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        let vocab = Vocabulary::with_words(sentences.iter().flatten());
        let corpus = sentences
            .iter()
            .map(|s| {
                let mut ids = vocab.encode(s)?;
                ids.push(vocab.eos());
                Ok(ids)
            })
            .collect::<Result<Vec<_>>>()?;
        NGramModel::train(&corpus, order, alpha, vocab)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn key(&self, context: &[TokenId]) -> Vec<TokenId> {
        let k = self.order - 1;
        let mut key = vec![START; k.saturating_sub(context.len())];
        key.extend_from_slice(&context[context.len().saturating_sub(k)..]);
        key
    }

    /// ln P(w | context), using only the last `k - 1` context tokens.
    pub fn logprob(&self, context: &[TokenId], w: TokenId) -> Result<f64> {
        self.vocab.check(w)?;
        let key = self.key(context);
        let (c, total) = match self.counts.get(&key) {
            Some(cc) => (cc.next.get(&w).copied().unwrap_or(0), cc.total),
            None => (0, 0),
        };
        Ok(((c as f64 + self.alpha) / (total as f64 + self.alpha * self.vocab.len() as f64)).ln())
    }

    fn dist_for_key(&self, key: &[TokenId]) -> LogDist {
        let v = self.vocab.len() as f64;
        match self.counts.get(key) {
            None => vec![-v.ln(); self.vocab.len()],
            Some(cc) => {
                let denom = cc.total as f64 + self.alpha * v;
                let mut d = vec![(self.alpha / denom).ln(); self.vocab.len()];
                for (&w, &c) in &cc.next {
                    d[w as usize] = ((c as f64 + self.alpha) / denom).ln();
                }
                d
            }
        }
    }

    /// The full next-token distribution after `context`.
    pub fn distribution(&self, context: &[TokenId]) -> LogDist {
        self.dist_for_key(&self.key(context))
    }

    /// Chain-rule log probability of a whole sequence.
    pub fn sequence_logprob(&self, tokens: &[TokenId]) -> Result<f64> {
        (0..tokens.len()).map(|i| self.logprob(&tokens[..i], tokens[i])).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = NGramRepr {
            format: FORMAT.into(),
            version: VERSION,
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.clone(),
            contexts: self
                .counts
                .iter()
                .map(|(ctx, cc)| ContextRepr {
                    context: ctx.iter().map(|&t| (t != START).then_some(t)).collect(),
                    total: cc.total,
                    next: cc.next.iter().map(|(&w, &c)| (w, c)).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: NGramRepr = serde_json::from_str(text)?;
        if repr.format != FORMAT || repr.version != VERSION {
            return Err(Error::Data(format!(
                "unsupported n-gram model format {} v{}",
                repr.format, repr.version
            )));
        }
        if repr.order == 0 || repr.alpha.is_nan() || repr.alpha <= 0.0 {
            return Err(Error::Data("n-gram model has invalid order or alpha".into()));
        }
        let mut counts = BTreeMap::new();
        for c in repr.contexts {
            if c.context.len() != repr.order - 1 {
                return Err(Error::Data("n-gram context has the wrong length".into()));
            }
            let key: Vec<TokenId> = c.context.iter().map(|t| t.unwrap_or(START)).collect();
            let mut next = BTreeMap::new();
            for (w, n) in c.next {
                repr.vocab.check(w)?;
                next.insert(w, n);
            }
            if next.values().sum::<u64>() != c.total {
                return Err(Error::Data("n-gram context total does not match its counts".into()));
            }
            counts.insert(key, ContextCounts { total: c.total, next });
        }
        Ok(NGramModel {
            order: repr.order,
            alpha: repr.alpha,
            vocab: repr.vocab,
            counts,
            tag: fresh_tag(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        NGramModel::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct NGramRepr {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    contexts: Vec<ContextRepr>,
}

#[derive(Serialize, Deserialize)]
struct ContextRepr {
    /// `null` marks sentence-start padding.
    context: Vec<Option<TokenId>>,
    total: u64,
    next: Vec<(TokenId, u64)>,
}

impl Scorer for NGramModel {
    type State = NGramState;

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn eos(&self) -> TokenId {
        self.vocab.eos()
    }

    fn start(&self) -> Result<(NGramState, LogDist)> {
        let context = vec![START; self.order - 1];
        let dist = self.dist_for_key(&context);
        Ok((NGramState { tag: self.tag, context }, dist))
    }

    fn step(&self, state: &NGramState, token: TokenId) -> Result<(NGramState, LogDist)> {
        if state.tag != self.tag || state.context.len() != self.order - 1 {
            return Err(Error::contract("n-gram state was produced by a different model"));
        }
        self.vocab.check(token)?;
        let mut context = state.context.clone();
        if !context.is_empty() {
            context.remove(0);
            context.push(token);
        }
        let dist = self.dist_for_key(&context);
        Ok((NGramState { tag: self.tag, context }, dist))
    }
}
