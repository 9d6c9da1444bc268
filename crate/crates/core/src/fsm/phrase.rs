use super::{Fsm, Row, StateId};
use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// A contiguous run of tokens that must appear in the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseConstraint {
    tokens: Vec<TokenId>,
}

impl PhraseConstraint {
    pub fn new(tokens: Vec<TokenId>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Compile("phrase constraint is empty".into()));
        }
        Ok(PhraseConstraint { tokens })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Substring-matching automaton with `len + 1` states.
///
/// State `k` means the longest suffix of the input read so far that is also a
/// prefix of the phrase has length `k`. Mismatches follow the prefix failure
/// function, so overlapping partial matches are not lost. The final state is
/// accepting and absorbing.
pub fn compile_phrase(p: &PhraseConstraint, vocab_size: usize) -> Result<Fsm> {
    let pat = p.tokens();
    if let Some(&bad) = pat.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::Compile(format!(
            "phrase references token {bad}, outside a vocabulary of {vocab_size}"
        )));
    }
    let n = pat.len();

    // fail[k]: length of the longest proper border of pat[..k]
    let mut fail = vec![0usize; n + 1];
    let mut k = 0;
    for i in 1..n {
        while k > 0 && pat[i] != pat[k] {
            k = fail[k];
        }
        if pat[i] == pat[k] {
            k += 1;
        }
        fail[i + 1] = k;
    }

    let mut alphabet = pat.to_vec();
    alphabet.sort_unstable();
    alphabet.dedup();

    let mut delta = vec![vec![0 as StateId; alphabet.len()]; n];
    for state in 0..n {
        for (j, &t) in alphabet.iter().enumerate() {
            delta[state][j] = if pat[state] == t {
                (state + 1) as StateId
            } else if state == 0 {
                0
            } else {
                delta[fail[state]][j]
            };
        }
    }

    let mut rows: Vec<Row> = delta
        .into_iter()
        .map(|targets| Row {
            default: 0,
            arcs: alphabet
                .iter()
                .zip(targets)
                .filter(|&(_, to)| to != 0)
                .map(|(&t, to)| (t, to))
                .collect(),
        })
        .collect();
    rows.push(Row {
        default: n as StateId,
        arcs: Vec::new(),
    });
    let accepting = (0..=n).map(|s| s == n).collect();
    let progress = (0..=n as u32).collect();
    Ok(Fsm::from_parts(vocab_size, 0, rows, accepting, progress))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::{compile_disjunctions, DisjunctiveConstraints};
    use proptest::prelude::*;

    fn contains(hay: &[TokenId], needle: &[TokenId]) -> bool {
        hay.windows(needle.len()).any(|w| w == needle)
    }

    fn phrase(t: &[TokenId], v: usize) -> Fsm {
        compile_phrase(&PhraseConstraint::new(t.to_vec()).unwrap(), v).unwrap()
    }

    #[test]
    fn two_word_phrase_has_three_states() {
        let f = phrase(&[3, 4], 6);
        assert_eq!(f.num_states(), 3);
        assert!(f.recognizes(&[1, 3, 4, 2]));
        assert!(!f.recognizes(&[4, 3]));
    }

    #[test]
    fn single_word_phrase_matches_singleton_disjunction() {
        let p = phrase(&[2], 4);
        let d = compile_disjunctions(&DisjunctiveConstraints::new(vec![[2].into()]), 4).unwrap();
        assert_eq!(p.num_states(), 2);
        for s in proptest_like_strings(4, 5) {
            assert_eq!(p.recognizes(&s), d.recognizes(&s));
        }
    }

    #[test]
    fn overlapping_prefix_uses_failure_link() {
        // a=0 b=1, phrase a a b
        let f = phrase(&[0, 0, 1], 2);
        let s = [0, 0, 0].iter().fold(f.start(), |s, &t| f.step(s, t).unwrap());
        assert_eq!(s, 2);
        assert!(f.recognizes(&[0, 0, 0, 1]));
        for s in proptest_like_strings(2, 6) {
            assert_eq!(f.recognizes(&s), contains(&s, &[0, 0, 1]), "{s:?}");
        }
    }

    #[test]
    fn final_state_absorbs() {
        let f = phrase(&[0, 1], 3);
        for t in 0..3 {
            assert_eq!(f.step(2, t).unwrap(), 2);
        }
    }

    #[test]
    fn rejects_bad_tokens_and_empty() {
        assert!(PhraseConstraint::new(vec![]).is_err());
        assert!(matches!(
            compile_phrase(&PhraseConstraint::new(vec![9]).unwrap(), 3),
            Err(Error::Compile(_))
        ));
    }

    fn proptest_like_strings(alphabet: u32, max_len: usize) -> Vec<Vec<TokenId>> {
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

    proptest! {
        #[test]
        fn agrees_with_substring_search(
            pat in prop::collection::vec(0u32..4, 1..5),
            seq in prop::collection::vec(0u32..4, 0..9),
        ) {
            let f = phrase(&pat, 4);
            prop_assert_eq!(f.num_states(), pat.len() + 1);
            prop_assert_eq!(f.recognizes(&seq), contains(&seq, &pat));
        }
    }
}
