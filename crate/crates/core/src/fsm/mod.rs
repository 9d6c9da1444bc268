//! Deterministic finite-state machines over token vocabularies.
//!
//! Each state stores a default successor plus a sorted list of token-specific
//! exceptions, so a machine over a 10k-word vocabulary with a handful of
//! constraint words stays small while the transition function remains total.

mod disjunction;
mod lemma;
mod phrase;
mod spec;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub use disjunction::{compile_disjunctions, DisjunctiveConstraints, MAX_DISJUNCTIONS};
pub use lemma::{expand_lemmas, LemmaMap};
pub use phrase::{compile_phrase, PhraseConstraint};
pub use spec::ConstraintSpec;

pub type StateId = u32;

/// Upper bound on the state count produced by [`intersect`].
pub const MAX_PRODUCT_STATES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Row {
    pub(crate) default: StateId,
    /// Sorted by token, no duplicates, no entry whose target equals `default`.
    pub(crate) arcs: Vec<(TokenId, StateId)>,
}

impl Row {
    fn next(&self, token: TokenId) -> StateId {
        match self.arcs.binary_search_by_key(&token, |&(t, _)| t) {
            Ok(i) => self.arcs[i].1,
            Err(_) => self.default,
        }
    }
}

/// A deterministic, total automaton over token ids `0..vocab_size`.
///
/// Besides acceptance, every state carries a progress count: the number of
/// satisfied disjunctions, the length of the matched phrase prefix, or the
/// sum of both for product machines. The decoder uses it to pick a fallback
/// when nothing accepted completes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsm {
    vocab_size: usize,
    start: StateId,
    rows: Vec<Row>,
    accepting: Vec<bool>,
    progress: Vec<u32>,
}

impl Fsm {
    pub(crate) fn from_parts(
        vocab_size: usize,
        start: StateId,
        rows: Vec<Row>,
        accepting: Vec<bool>,
        progress: Vec<u32>,
    ) -> Self {
        debug_assert_eq!(rows.len(), accepting.len());
        debug_assert_eq!(rows.len(), progress.len());
        debug_assert!((start as usize) < rows.len());
        debug_assert!(rows.iter().all(|r| r
            .arcs
            .windows(2)
            .all(|w| w[0].0 < w[1].0)
            && r.arcs.iter().all(|&(t, s)| (t as usize) < vocab_size
                && (s as usize) < accepting.len()
                && s != r.default)));
        Fsm {
            vocab_size,
            start,
            rows,
            accepting,
            progress,
        }
    }

    /// The one-state machine that accepts every sequence.
    pub fn universal(vocab_size: usize) -> Self {
        Fsm::from_parts(
            vocab_size,
            0,
            vec![Row {
                default: 0,
                arcs: Vec::new(),
            }],
            vec![true],
            vec![0],
        )
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.accepting.get(state as usize).copied().unwrap_or(false)
    }

    pub fn accepting_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.accepting
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(s, _)| s as StateId)
    }

    /// Constraint progress recorded for `state`.
    pub fn progress(&self, state: StateId) -> u32 {
        self.progress[state as usize]
    }

    /// δ(state, token), with range checks.
    pub fn step(&self, state: StateId, token: TokenId) -> Result<StateId> {
        if state as usize >= self.rows.len() {
            return Err(Error::contract(format!(
                "state {state} out of range for a {}-state machine",
                self.rows.len()
            )));
        }
        if token as usize >= self.vocab_size {
            return Err(Error::InvalidToken {
                id: token,
                vocab_size: self.vocab_size,
            });
        }
        Ok(self.next(state, token))
    }

    #[inline]
    pub(crate) fn next(&self, state: StateId, token: TokenId) -> StateId {
        self.rows[state as usize].next(token)
    }

    pub(crate) fn row(&self, state: StateId) -> &Row {
        &self.rows[state as usize]
    }

    /// Folds δ over `tokens` from the start state. `None` when a token is out
    /// of range.
    pub fn run(&self, tokens: &[TokenId]) -> Option<StateId> {
        tokens.iter().try_fold(self.start, |s, &t| {
            ((t as usize) < self.vocab_size).then(|| self.next(s, t))
        })
    }

    /// Whether `tokens` drives the machine from its start state into an
    /// accepting state. Sequences containing out-of-range ids are outside the
    /// language and are rejected.
    pub fn recognizes(&self, tokens: &[TokenId]) -> bool {
        self.run(tokens).is_some_and(|s| self.is_accepting(s))
    }

    /// Debug dump: every transition whose target differs from its source.
    pub fn dump(&self) -> FsmDump {
        let mut transitions = Vec::new();
        for (s, row) in self.rows.iter().enumerate() {
            let s = s as StateId;
            let mut arcs = row.arcs.iter().peekable();
            for t in 0..self.vocab_size as TokenId {
                let to = match arcs.peek() {
                    Some(&&(at, to)) if at == t => {
                        arcs.next();
                        to
                    }
                    _ => row.default,
                };
                if to != s {
                    transitions.push((s, t, to));
                }
            }
        }
        FsmDump {
            num_states: self.num_states(),
            vocab_size: self.vocab_size,
            start: self.start,
            accepting: self.accepting_states().collect(),
            transitions,
        }
    }
}

/// JSON-friendly view of an [`Fsm`]; self-loops are implied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmDump {
    pub num_states: usize,
    pub vocab_size: usize,
    pub start: StateId,
    pub accepting: Vec<StateId>,
    /// `(from, token, to)` triples.
    pub transitions: Vec<(StateId, TokenId, StateId)>,
}

/// Product construction over reachable state pairs.
///
/// The result accepts exactly the sequences accepted by both inputs.
pub fn intersect(a: &Fsm, b: &Fsm) -> Result<Fsm> {
    intersect_with_cap(a, b, MAX_PRODUCT_STATES)
}

pub fn intersect_with_cap(a: &Fsm, b: &Fsm, cap: usize) -> Result<Fsm> {
    if a.vocab_size != b.vocab_size {
        return Err(Error::dimension(
            "intersect: vocabulary size",
            a.vocab_size,
            b.vocab_size,
        ));
    }
    let mut ids: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut pairs: Vec<(StateId, StateId)> = Vec::new();
    let mut intern = |pair: (StateId, StateId),
                      pairs: &mut Vec<(StateId, StateId)>|
     -> Result<StateId> {
        if let Some(&id) = ids.get(&pair) {
            return Ok(id);
        }
        if pairs.len() >= cap {
            return Err(Error::Capacity {
                what: "product machine states",
                requested: pairs.len() + 1,
                limit: cap,
            });
        }
        let id = pairs.len() as StateId;
        ids.insert(pair, id);
        pairs.push(pair);
        Ok(id)
    };

    let start = intern((a.start, b.start), &mut pairs)?;
    let mut rows = Vec::new();
    let mut next = 0;
    while next < pairs.len() {
        let (sa, sb) = pairs[next];
        let (ra, rb) = (a.row(sa), b.row(sb));
        let default = intern((ra.default, rb.default), &mut pairs)?;
        let mut tokens: Vec<TokenId> = ra
            .arcs
            .iter()
            .chain(rb.arcs.iter())
            .map(|&(t, _)| t)
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        let mut arcs = Vec::with_capacity(tokens.len());
        for t in tokens {
            let to = intern((ra.next(t), rb.next(t)), &mut pairs)?;
            if to != default {
                arcs.push((t, to));
            }
        }
        rows.push(Row { default, arcs });
        next += 1;
    }
    let accepting = pairs
        .iter()
        .map(|&(sa, sb)| a.is_accepting(sa) && b.is_accepting(sb))
        .collect();
    let progress = pairs
        .iter()
        .map(|&(sa, sb)| a.progress(sa) + b.progress(sb))
        .collect();
    Ok(Fsm::from_parts(a.vocab_size, start, rows, accepting, progress))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn all_strings(alphabet: u32, max_len: usize) -> Vec<Vec<TokenId>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for t in 0..alphabet {
                    let mut s2: Vec<TokenId> = s.clone();
                    s2.push(t);
                    next.push(s2);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    fn contains(hay: &[TokenId], needle: &[TokenId]) -> bool {
        hay.windows(needle.len()).any(|w| w == needle)
    }

    fn singletons(sets: &[&[TokenId]], vocab_size: usize) -> Fsm {
        let c = DisjunctiveConstraints::new(
            sets.iter()
                .map(|s| s.iter().copied().collect::<BTreeSet<_>>())
                .collect(),
        );
        compile_disjunctions(&c, vocab_size).unwrap()
    }

    #[test]
    fn universal_accepts_everything() {
        let f = Fsm::universal(3);
        assert!(f.recognizes(&[]));
        assert!(f.recognizes(&[0, 1, 2]));
        assert!(!f.recognizes(&[3]));
    }

    #[test]
    fn step_rejects_out_of_range() {
        let f = Fsm::universal(3);
        assert!(matches!(f.step(1, 0), Err(Error::Contract(_))));
        assert!(matches!(f.step(0, 3), Err(Error::InvalidToken { .. })));
        assert_eq!(f.step(0, 2).unwrap(), 0);
    }

    #[test]
    fn intersect_with_universal_is_identity() {
        let x = compile_phrase(&PhraseConstraint::new(vec![0, 1]).unwrap(), 3).unwrap();
        let u = Fsm::universal(3);
        let p = intersect(&x, &u).unwrap();
        for s in all_strings(3, 5) {
            assert_eq!(p.recognizes(&s), x.recognizes(&s));
        }
    }

    #[test]
    fn intersect_phrase_and_disjunction() {
        // a=0, b=1, c=2
        let ab = compile_phrase(&PhraseConstraint::new(vec![0, 1]).unwrap(), 4).unwrap();
        let c = singletons(&[&[2]], 4);
        let p = intersect(&ab, &c).unwrap();
        assert!(p.recognizes(&[0, 1, 2]));
        assert!(p.recognizes(&[2, 0, 1]));
        assert!(!p.recognizes(&[0, 2, 1]));
        for s in all_strings(4, 4) {
            let direct = contains(&s, &[0, 1]) && s.contains(&2);
            assert_eq!(p.recognizes(&s), direct, "{s:?}");
        }
        assert!(p.num_states() <= ab.num_states() * c.num_states());
    }

    #[test]
    fn intersect_two_phrases() {
        let p1 = compile_phrase(&PhraseConstraint::new(vec![0, 1]).unwrap(), 3).unwrap();
        let p2 = compile_phrase(&PhraseConstraint::new(vec![1, 2]).unwrap(), 3).unwrap();
        let p = intersect(&p1, &p2).unwrap();
        for s in all_strings(3, 6) {
            assert_eq!(p.recognizes(&s), contains(&s, &[0, 1]) && contains(&s, &[1, 2]));
        }
    }

    #[test]
    fn intersect_respects_cap() {
        let a = singletons(&[&[0], &[1], &[2]], 6);
        let b = singletons(&[&[3], &[4], &[5]], 6);
        assert_eq!(intersect(&a, &b).unwrap().num_states(), 64);
        assert!(matches!(
            intersect_with_cap(&a, &b, 10),
            Err(Error::Capacity { limit: 10, .. })
        ));
    }

    #[test]
    fn intersect_vocab_mismatch() {
        assert!(intersect(&Fsm::universal(3), &Fsm::universal(4)).is_err());
    }

    #[test]
    fn dump_lists_non_self_loops() {
        let f = singletons(&[&[1]], 3);
        let d = f.dump();
        assert_eq!(d.num_states, 2);
        assert_eq!(d.accepting, vec![1]);
        assert_eq!(d.transitions, vec![(0, 1, 1)]);
    }
}
