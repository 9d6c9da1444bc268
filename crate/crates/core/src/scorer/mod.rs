//! The sequence-scorer contract and count-based reference scorers.

mod ngram;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub use ngram::{NGramModel, NGramState};

/// Natural-log probabilities over the whole vocabulary, indexed by token id.
pub type LogDist = Vec<f64>;

/// A left-to-right conditional model of token sequences.
///
/// `start` yields the distribution of the first token; `step` consumes one
/// token and yields the distribution of the next. States are per-hypothesis
/// values and are cloned freely by the decoder, so cloning should be cheap.
pub trait Scorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn eos(&self) -> TokenId;

    fn start(&self) -> Result<(Self::State, LogDist)>;

    fn step(&self, state: &Self::State, token: TokenId) -> Result<(Self::State, LogDist)>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    type State = S::State;

    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn eos(&self) -> TokenId {
        (**self).eos()
    }

    fn start(&self) -> Result<(Self::State, LogDist)> {
        (**self).start()
    }

    fn step(&self, state: &Self::State, token: TokenId) -> Result<(Self::State, LogDist)> {
        (**self).step(state, token)
    }
}

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// Identifies one model value so that states produced by a different (or an
/// outdated) model can be detected.
pub(crate) fn fresh_tag() -> u64 {
    NEXT_TAG.fetch_add(1, Ordering::Relaxed)
}

/// Total probability mass of a log-distribution.
pub fn mass(dist: &[f64]) -> f64 {
    dist.iter().map(|lp| lp.exp()).sum()
}

/// Checks that `dist` is a proper log-distribution within `tol`.
pub fn check_distribution(dist: &[f64], tol: f64) -> Result<()> {
    if dist.iter().any(|lp| lp.is_nan() || *lp == f64::INFINITY) {
        return Err(Error::NonFinite("log-distribution".into()));
    }
    let m = mass(dist);
    if (m - 1.0).abs() > tol {
        return Err(Error::NotADistribution { mass: m });
    }
    Ok(())
}

/// Every token equally likely at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformScorer {
    size: usize,
    eos: TokenId,
}

impl UniformScorer {
    pub fn new(size: usize, eos: TokenId) -> Result<Self> {
        if size == 0 {
            return Err(Error::Empty("vocabulary"));
        }
        if eos as usize >= size {
            return Err(Error::InvalidToken {
                id: eos,
                vocab_size: size,
            });
        }
        Ok(UniformScorer { size, eos })
    }

    fn dist(&self) -> LogDist {
        vec![-(self.size as f64).ln(); self.size]
    }
}

impl Scorer for UniformScorer {
    type State = ();

    fn vocab_size(&self) -> usize {
        self.size
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn start(&self) -> Result<((), LogDist)> {
        Ok(((), self.dist()))
    }

    fn step(&self, _: &(), token: TokenId) -> Result<((), LogDist)> {
        if token as usize >= self.size {
            return Err(Error::InvalidToken {
                id: token,
                vocab_size: self.size,
            });
        }
        Ok(((), self.dist()))
    }
}

/// First-order Markov chain given by explicit log-probability tables.
///
/// Useful for hand-built and randomized test models. Rows may contain
/// `-inf` entries for impossible transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovScorer {
    initial: LogDist,
    transitions: Vec<LogDist>,
    eos: TokenId,
}

impl MarkovScorer {
    /// Every row must be a distribution within 1e-6.
    pub fn new(initial: LogDist, transitions: Vec<LogDist>, eos: TokenId) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::Empty("vocabulary"));
        }
        if transitions.len() != n {
            return Err(Error::dimension("transition rows", n, transitions.len()));
        }
        if eos as usize >= n {
            return Err(Error::InvalidToken {
                id: eos,
                vocab_size: n,
            });
        }
        check_distribution(&initial, 1e-6)?;
        for row in &transitions {
            if row.len() != n {
                return Err(Error::dimension("transition row", n, row.len()));
            }
            check_distribution(row, 1e-6)?;
        }
        Ok(MarkovScorer {
            initial,
            transitions,
            eos,
        })
    }

    /// Builds the chain from unnormalized non-negative weights.
    pub fn from_weights(initial: &[f64], transitions: &[Vec<f64>], eos: TokenId) -> Result<Self> {
        fn normalize(w: &[f64]) -> LogDist {
            let z: f64 = w.iter().sum();
            w.iter().map(|x| (x / z).ln()).collect()
        }
        MarkovScorer::new(
            normalize(initial),
            transitions.iter().map(|r| normalize(r)).collect(),
            eos,
        )
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, from: TokenId) -> &[f64] {
        &self.transitions[from as usize]
    }
}

impl Scorer for MarkovScorer {
    type State = TokenId;

    fn vocab_size(&self) -> usize {
        self.initial.len()
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn start(&self) -> Result<(TokenId, LogDist)> {
        Ok((TokenId::MAX, self.initial.clone()))
    }

    fn step(&self, _: &TokenId, token: TokenId) -> Result<(TokenId, LogDist)> {
        let row = self
            .transitions
            .get(token as usize)
            .ok_or(Error::InvalidToken {
                id: token,
                vocab_size: self.initial.len(),
            })?;
        Ok((token, row.clone()))
    }
}
