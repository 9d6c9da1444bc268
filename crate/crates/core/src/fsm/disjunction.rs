use std::collections::{BTreeMap, BTreeSet};

use super::{Fsm, Row, StateId};
use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Largest number of disjunctions accepted by [`compile_disjunctions`]; the
/// machine has `2^m` states.
pub const MAX_DISJUNCTIONS: usize = 16;

/// A conjunction of word sets: a sequence satisfies it when every set has at
/// least one member somewhere in the sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DisjunctiveConstraints {
    pub sets: Vec<BTreeSet<TokenId>>,
}

impl DisjunctiveConstraints {
    pub fn new(sets: Vec<BTreeSet<TokenId>>) -> Self {
        DisjunctiveConstraints { sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        for (i, set) in self.sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Compile(format!("disjunction {i} is empty")));
            }
            if let Some(&bad) = set.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::Compile(format!(
                    "disjunction {i} references token {bad}, outside a vocabulary of {vocab_size}"
                )));
            }
        }
        Ok(())
    }

    /// Direct membership check, independent of any automaton.
    pub fn satisfied_by(&self, tokens: &[TokenId]) -> bool {
        self.sets
            .iter()
            .all(|set| tokens.iter().any(|t| set.contains(t)))
    }
}

/// One state per subset of satisfied disjunctions, encoded as a bitmask.
///
/// Reading a member of set `i` sets bit `i`; bits never clear. Start is the
/// empty mask and the full mask is the single accepting state.
pub fn compile_disjunctions(c: &DisjunctiveConstraints, vocab_size: usize) -> Result<Fsm> {
    compile_disjunctions_with_cap(c, vocab_size, MAX_DISJUNCTIONS)
}

pub fn compile_disjunctions_with_cap(
    c: &DisjunctiveConstraints,
    vocab_size: usize,
    max_disjunctions: usize,
) -> Result<Fsm> {
    let m = c.len();
    if m > max_disjunctions.min(31) {
        return Err(Error::Capacity {
            what: "disjunctive constraints",
            requested: m,
            limit: max_disjunctions.min(31),
        });
    }
    c.validate(vocab_size)?;

    // token -> bits it sets
    let mut bits: BTreeMap<TokenId, u32> = BTreeMap::new();
    for (i, set) in c.sets.iter().enumerate() {
        for &t in set {
            *bits.entry(t).or_default() |= 1 << i;
        }
    }

    let n = 1usize << m;
    let full = (n - 1) as StateId;
    let rows = (0..n as StateId)
        .map(|mask| Row {
            default: mask,
            arcs: bits
                .iter()
                .filter_map(|(&t, &b)| {
                    let to = mask | b;
                    (to != mask).then_some((t, to))
                })
                .collect(),
        })
        .collect();
    let accepting = (0..n as StateId).map(|s| s == full).collect();
    let progress = (0..n as u32).map(u32::count_ones).collect();
    Ok(Fsm::from_parts(vocab_size, 0, rows, accepting, progress))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;
    use proptest::prelude::*;

    fn sets(v: &[&[TokenId]]) -> DisjunctiveConstraints {
        DisjunctiveConstraints::new(v.iter().map(|s| s.iter().copied().collect()).collect())
    }

    fn all_strings(alphabet: u32, max_len: usize) -> Vec<Vec<TokenId>> {
        let mut out = vec![vec![]];
        let mut frontier: Vec<Vec<TokenId>> = vec![vec![]];
        for _ in 0..max_len {
            frontier = frontier
                .iter()
                .flat_map(|s| {
                    (0..alphabet).map(move |t| {
                        let mut s = s.clone();
                        s.push(t);
                        s
                    })
                })
                .collect();
            out.extend(frontier.iter().cloned());
        }
        out
    }

    #[test]
    fn chair_desk_machine() {
        let v = Vocabulary::with_words(["a", "chair", "chairs", "desk", "table", "the", "near", "and"]);
        let id = |w| v.id(w).unwrap();
        let c = DisjunctiveConstraints::new(vec![
            [id("chair"), id("chairs")].into(),
            [id("desk"), id("table")].into(),
        ]);
        let f = compile_disjunctions(&c, v.len()).unwrap();
        assert_eq!(f.num_states(), 4);
        assert_eq!(f.start(), 0);
        assert_eq!(f.accepting_states().collect::<Vec<_>>(), vec![3]);
        assert_eq!(f.step(0, id("chair")).unwrap(), 1);
        assert_eq!(f.step(1, id("table")).unwrap(), 3);
        assert_eq!(f.step(0, id("desk")).unwrap(), 2);
        assert_eq!(f.step(3, id("a")).unwrap(), 3);

        let seq = v.encode(&["the", "chair", "near", "the", "table"]).unwrap();
        let end = seq.iter().fold(f.start(), |s, &t| f.step(s, t).unwrap());
        assert_eq!(end, 3);
        assert!(f.recognizes(&seq));
        assert!(f.recognizes(&v.encode(&["a", "table", "and", "a", "chair"]).unwrap()));
        assert!(!f.recognizes(&v.encode(&["a", "table"]).unwrap()));
    }

    #[test]
    fn no_constraints_single_accepting_state() {
        let f = compile_disjunctions(&DisjunctiveConstraints::default(), 5).unwrap();
        assert_eq!(f.num_states(), 1);
        assert!(f.is_accepting(f.start()));
        assert!(f.recognizes(&[]));
        for t in 0..5 {
            assert_eq!(f.step(0, t).unwrap(), 0);
        }
    }

    #[test]
    fn three_singletons_exhaustive() {
        let c = sets(&[&[0], &[2], &[4]]);
        let f = compile_disjunctions(&c, 5).unwrap();
        assert_eq!(f.num_states(), 8);
        for s in all_strings(5, 4) {
            let direct = [0, 2, 4].iter().all(|t| s.contains(t));
            assert_eq!(f.recognizes(&s), direct, "{s:?}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compile_disjunctions(&sets(&[&[7]]), 5),
            Err(Error::Compile(_))
        ));
        assert!(matches!(
            compile_disjunctions(&sets(&[&[]]), 5),
            Err(Error::Compile(_))
        ));
        let many: Vec<&[TokenId]> = vec![&[0]; 17];
        assert!(matches!(
            compile_disjunctions(&sets(&many), 5),
            Err(Error::Capacity { limit: 16, .. })
        ));
    }

    #[test]
    fn state_count_is_two_to_the_m() {
        for m in 0..=6u32 {
            let c = DisjunctiveConstraints::new((0..m).map(|i| [i].into()).collect());
            assert_eq!(compile_disjunctions(&c, 8).unwrap().num_states(), 1 << m);
        }
    }

    proptest! {
        #[test]
        fn agrees_with_membership(
            raw in prop::collection::vec(prop::collection::btree_set(0u32..6, 1..3), 0..4),
            seq in prop::collection::vec(0u32..6, 0..7),
        ) {
            let c = DisjunctiveConstraints::new(raw);
            let f = compile_disjunctions(&c, 6).unwrap();
            prop_assert_eq!(f.recognizes(&seq), c.satisfied_by(&seq));
        }

        #[test]
        fn mask_is_monotone(
            raw in prop::collection::vec(prop::collection::btree_set(0u32..6, 1..3), 0..4),
            seq in prop::collection::vec(0u32..6, 0..7),
        ) {
            let f = compile_disjunctions(&DisjunctiveConstraints::new(raw), 6).unwrap();
            let mut s = f.start();
            for t in seq {
                let n = f.step(s, t).unwrap();
                prop_assert_eq!(n & s, s);
                s = n;
            }
        }
    }
}
