use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    compile_disjunctions, compile_phrase, expand_lemmas, intersect, DisjunctiveConstraints, Fsm,
    LemmaMap, PhraseConstraint,
};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

/// Word-level constraints as written in a spec file:
///
/// ```json
/// {"disjunctions": [["chair","chairs"],["desk","table"]], "phrases": [["billiard","table"]]}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    #[serde(default)]
    pub disjunctions: Vec<Vec<String>>,
    #[serde(default)]
    pub phrases: Vec<Vec<String>>,
}

impl ConstraintSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn is_empty(&self) -> bool {
        self.disjunctions.is_empty() && self.phrases.is_empty()
    }

    /// Concatenates both constraint lists.
    pub fn merged(&self, other: &ConstraintSpec) -> ConstraintSpec {
        ConstraintSpec {
            disjunctions: self
                .disjunctions
                .iter()
                .chain(&other.disjunctions)
                .cloned()
                .collect(),
            phrases: self.phrases.iter().chain(&other.phrases).cloned().collect(),
        }
    }

    /// Resolves every disjunction to token ids. With a lemma map each word
    /// contributes all of its in-vocabulary lemma-mates; a word that resolves
    /// to nothing is an unknown-token error.
    pub fn resolve_disjunctions(
        &self,
        v: &Vocabulary,
        lemmas: Option<&LemmaMap>,
    ) -> Result<DisjunctiveConstraints> {
        let empty = LemmaMap::new();
        let lemmas = lemmas.unwrap_or(&empty);
        let mut sets = Vec::with_capacity(self.disjunctions.len());
        for words in &self.disjunctions {
            if words.is_empty() {
                return Err(Error::Compile("empty disjunction in constraint spec".into()));
            }
            let mut set = std::collections::BTreeSet::new();
            for w in words {
                match expand_lemmas(w, lemmas, v) {
                    Ok(ids) => set.extend(ids),
                    Err(Error::Unsatisfiable(w)) => return Err(Error::UnknownToken(w)),
                    Err(e) => return Err(e),
                }
            }
            sets.push(set);
        }
        Ok(DisjunctiveConstraints::new(sets))
    }

    /// Phrases are matched exactly; no lemma expansion.
    pub fn resolve_phrases(&self, v: &Vocabulary) -> Result<Vec<PhraseConstraint>> {
        self.phrases
            .iter()
            .map(|words| {
                let lowered: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
                PhraseConstraint::new(v.encode(&lowered)?)
            })
            .collect()
    }

    /// One machine for the whole spec: the disjunction machine intersected
    /// with every phrase machine.
    pub fn compile(&self, v: &Vocabulary, lemmas: Option<&LemmaMap>) -> Result<Fsm> {
        let mut fsm = compile_disjunctions(&self.resolve_disjunctions(v, lemmas)?, v.len())?;
        for p in self.resolve_phrases(v)? {
            fsm = intersect(&fsm, &compile_phrase(&p, v.len())?)?;
        }
        Ok(fsm)
    }

    /// One machine per phrase, each intersected with the disjunction machine.
    /// Without phrases this is the single disjunction machine.
    pub fn compile_per_phrase(&self, v: &Vocabulary, lemmas: Option<&LemmaMap>) -> Result<Vec<Fsm>> {
        let base = compile_disjunctions(&self.resolve_disjunctions(v, lemmas)?, v.len())?;
        let phrases = self.resolve_phrases(v)?;
        if phrases.is_empty() {
            return Ok(vec![base]);
        }
        phrases
            .iter()
            .map(|p| intersect(&base, &compile_phrase(p, v.len())?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::with_words([
            "a", "chair", "chairs", "desk", "table", "billiard", "pool", "near",
        ])
    }

    #[test]
    fn parses_spec_file_format() {
        let s: ConstraintSpec = serde_json::from_str(
            r#"{"disjunctions": [["chair","chairs"],["desk","table"]], "phrases": [["billiard","table"]]}"#,
        )
        .unwrap();
        assert_eq!(s.disjunctions.len(), 2);
        assert_eq!(s.phrases, vec![vec!["billiard".to_string(), "table".to_string()]]);
        let empty: ConstraintSpec = serde_json::from_str("{}").unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn compiles_combined_machine() {
        let v = vocab();
        let s = ConstraintSpec {
            disjunctions: vec![vec!["chair".into(), "chairs".into()]],
            phrases: vec![vec!["billiard".into(), "table".into()]],
        };
        let f = s.compile(&v, None).unwrap();
        let enc = |w: &[&str]| v.encode(w).unwrap();
        assert!(f.recognizes(&enc(&["a", "chair", "near", "a", "billiard", "table"])));
        assert!(!f.recognizes(&enc(&["a", "chair", "near", "a", "table"])));
        assert!(!f.recognizes(&enc(&["a", "billiard", "table"])));
    }

    #[test]
    fn unknown_word_is_an_error() {
        let v = vocab();
        let s = ConstraintSpec {
            disjunctions: vec![vec!["racket".into()]],
            phrases: vec![],
        };
        assert!(matches!(s.compile(&v, None), Err(Error::UnknownToken(w)) if w == "racket"));
        let s = ConstraintSpec {
            disjunctions: vec![],
            phrases: vec![vec!["snooker".into(), "table".into()]],
        };
        assert!(matches!(s.compile(&v, None), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn lemma_expansion_widens_disjunctions() {
        let v = vocab();
        let lm = LemmaMap::from_reader("chair\tchairs\n".as_bytes()).unwrap();
        let s = ConstraintSpec {
            disjunctions: vec![vec!["chair".into()]],
            phrases: vec![],
        };
        let f = s.compile(&v, Some(&lm)).unwrap();
        assert!(f.recognizes(&v.encode(&["chairs"]).unwrap()));
        let strict = s.compile(&v, None).unwrap();
        assert!(!strict.recognizes(&v.encode(&["chairs"]).unwrap()));
    }

    #[test]
    fn per_phrase_machines() {
        let v = vocab();
        let s = ConstraintSpec {
            disjunctions: vec![],
            phrases: vec![
                vec!["pool".into(), "table".into()],
                vec!["billiard".into(), "table".into()],
            ],
        };
        let fsms = s.compile_per_phrase(&v, None).unwrap();
        assert_eq!(fsms.len(), 2);
        assert!(fsms[0].recognizes(&v.encode(&["pool", "table"]).unwrap()));
        assert!(!fsms[1].recognizes(&v.encode(&["pool", "table"]).unwrap()));
        assert_eq!(ConstraintSpec::default().compile_per_phrase(&v, None).unwrap().len(), 1);
    }
}
