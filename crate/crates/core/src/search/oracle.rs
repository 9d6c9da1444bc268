use std::cmp::Ordering;

use super::{Hypothesis, SearchParams};
use crate::error::{Error, Result};
use crate::fsm::Fsm;
use crate::scorer::Scorer;
use crate::vocab::TokenId;

/// Default cap on prefixes visited by [`exhaustive_search`].
pub const DEFAULT_ORACLE_LIMIT: usize = 5_000_000;

/// Exact constrained argmax by enumeration.
///
/// Visits every sequence of at most `max_len` tokens that ends in
/// end-of-sequence (respecting `no_repeat`, skipping zero-probability
/// tokens), keeps those the machine recognizes, and returns the best under
/// the same total order the decoder uses. Beam size is ignored. Fails with a
/// capacity error once more than `limit` prefixes have been expanded.
pub fn exhaustive_search<S: Scorer>(
    scorer: &S,
    fsm: &Fsm,
    params: &SearchParams,
    limit: usize,
) -> Result<Option<Hypothesis>> {
    params.validate()?;
    if fsm.vocab_size() != scorer.vocab_size() {
        return Err(Error::dimension(
            "constraint machine vocabulary",
            scorer.vocab_size(),
            fsm.vocab_size(),
        ));
    }
    let mut search = Exhaustive {
        scorer,
        fsm,
        params,
        limit,
        visited: 0,
        best: None,
        prefix: Vec::new(),
    };
    let (state, dist) = scorer.start()?;
    search.expand(&state, &dist, 0.0)?;
    Ok(search.best)
}

struct Exhaustive<'a, S: Scorer> {
    scorer: &'a S,
    fsm: &'a Fsm,
    params: &'a SearchParams,
    limit: usize,
    visited: usize,
    best: Option<Hypothesis>,
    prefix: Vec<TokenId>,
}

impl<S: Scorer> Exhaustive<'_, S> {
    fn expand(&mut self, state: &S::State, dist: &[f64], logprob: f64) -> Result<()> {
        self.visited += 1;
        if self.visited > self.limit {
            return Err(Error::Capacity {
                what: "exhaustive search prefixes",
                requested: self.visited,
                limit: self.limit,
            });
        }
        let eos = self.scorer.eos();
        let last = self.prefix.last().copied();
        for token in 0..self.scorer.vocab_size() as TokenId {
            if self.params.no_repeat && Some(token) == last {
                continue;
            }
            let lp = dist[token as usize];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            self.prefix.push(token);
            if token == eos {
                if self.fsm.recognizes(&self.prefix) {
                    let total = logprob + lp;
                    let better = self.best.as_ref().is_none_or(|b| {
                        super::rank(total, &self.prefix, b.logprob, &b.tokens) == Ordering::Less
                    });
                    if better {
                        let end = self.fsm.run(&self.prefix).unwrap_or(self.fsm.start());
                        self.best = Some(Hypothesis {
                            tokens: self.prefix.clone(),
                            logprob: total,
                            fsm_state: end,
                            completed: true,
                        });
                    }
                }
            } else if self.prefix.len() < self.params.max_len {
                let (next, next_dist) = self.scorer.step(state, token)?;
                self.expand(&next, &next_dist, logprob + lp)?;
            }
            self.prefix.pop();
        }
        Ok(())
    }
}
