//! Object-mention F1 and constraint satisfaction rate.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::Fsm;
use crate::search::DecodeResult;
use crate::vocab::tokenize;

/// Surface forms that count as mentioning an object. Multi-word forms match
/// contiguous token runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionSpec {
    pub object: String,
    pub mentions: Vec<String>,
}

impl MentionSpec {
    pub fn new<I, S>(object: &str, mentions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        MentionSpec {
            object: object.to_string(),
            mentions: mentions.into_iter().map(|m| m.as_ref().to_string()).collect(),
        }
    }

    /// Reads one spec object, or an array of them.
    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<MentionSpec>> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(match value {
            serde_json::Value::Array(_) => serde_json::from_value(value)?,
            _ => vec![serde_json::from_value(value)?],
        })
    }

    fn patterns(&self) -> Result<BTreeSet<Vec<String>>> {
        let set: BTreeSet<Vec<String>> = self
            .mentions
            .iter()
            .map(|m| tokenize(m))
            .filter(|t| !t.is_empty())
            .collect();
        if set.is_empty() {
            return Err(Error::Empty("mention set"));
        }
        Ok(set)
    }
}

/// A generated caption and its reference captions, already tokenized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub generated: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    /// Lower-cases and whitespace-tokenizes raw strings.
    pub fn from_text<S: AsRef<str>>(generated: &str, references: &[S]) -> Self {
        EvalPair {
            generated: tokenize(generated),
            references: references.iter().map(|r| tokenize(r.as_ref())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub object: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub per_object: Vec<F1Report>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn mentions(tokens: &[String], patterns: &BTreeSet<Vec<String>>) -> bool {
    patterns
        .iter()
        .any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-caption mention F1: a caption is predicted positive when it mentions
/// the object, and actually positive when any reference does.
pub fn f1_mentions(pairs: &[EvalPair], spec: &MentionSpec) -> Result<F1Report> {
    let patterns = spec.patterns()?;
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for pair in pairs {
        if pair.references.is_empty() {
            return Err(Error::Data("evaluation pair without references".into()));
        }
        let predicted = mentions(&pair.generated, &patterns);
        let actual = pair.references.iter().any(|r| mentions(r, &patterns));
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut degenerate = false;
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let recall = ratio(tp, tp + fn_, &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Report {
        object: spec.object.clone(),
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        tn,
        degenerate,
    })
}

/// Unweighted mean of per-object scores.
pub fn macro_f1(pairs: &[EvalPair], specs: &[MentionSpec]) -> Result<MacroReport> {
    if specs.is_empty() {
        return Err(Error::Empty("mention specs"));
    }
    let per_object = specs
        .iter()
        .map(|s| f1_mentions(pairs, s))
        .collect::<Result<Vec<_>>>()?;
    let n = per_object.len() as f64;
    let mean = |f: fn(&F1Report) -> f64| per_object.iter().map(f).sum::<f64>() / n;
    Ok(MacroReport {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        per_object,
    })
}

/// Fraction of results whose best sequence the paired machine accepts,
/// whatever status the decoder reported. A result without a sequence counts
/// as unsatisfied.
pub fn satisfaction_rate(results: &[DecodeResult], fsms: &[&Fsm]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("decode results"));
    }
    if results.len() != fsms.len() {
        return Err(Error::dimension("machines per result", results.len(), fsms.len()));
    }
    let ok = results
        .iter()
        .zip(fsms)
        .filter(|(r, f)| r.best.as_ref().is_some_and(|h| f.recognizes(&h.tokens)))
        .count();
    Ok(ok as f64 / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::{compile_disjunctions, DisjunctiveConstraints};
    use crate::scorer::MarkovScorer;
    use crate::search::{constrained_beam_search, SearchParams, Status};
    use proptest::prelude::*;

    fn racket() -> MentionSpec {
        MentionSpec::new("racket", ["racket", "rackets", "tennis racquet"])
    }

    #[test]
    fn all_positive_is_perfect() {
        let pairs = vec![
            EvalPair::from_text("a man with a racket", &["a racket"]),
            EvalPair::from_text("two rackets", &["rackets on a bench", "grass"]),
        ];
        let r = f1_mentions(&pairs, &racket()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn hand_counted_two_thirds() {
        let pairs = vec![
            EvalPair::from_text("a racket", &["a racket"]),
            EvalPair::from_text("a tennis racquet", &["man holding racket"]),
            EvalPair::from_text("a racket", &["a dog"]),
            EvalPair::from_text("a dog", &["a racket"]),
        ];
        let r = f1_mentions(&pairs, &racket()).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (2, 1, 1, 0));
        for v in [r.precision, r.recall, r.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn never_mentioning_scores_zero() {
        let pairs = vec![
            EvalPair::from_text("a dog", &["a racket"]),
            EvalPair::from_text("a cat", &["a cat"]),
        ];
        let r = f1_mentions(&pairs, &racket()).unwrap();
        assert_eq!((r.recall, r.f1), (0.0, 0.0));
        assert!(r.degenerate);
    }

    #[test]
    fn multi_word_mentions_need_contiguity() {
        let spec = MentionSpec::new("racket", ["tennis racquet"]);
        let hit = EvalPair::from_text("a tennis racquet", &["x"]);
        let miss = EvalPair::from_text("tennis and racquet", &["x"]);
        assert_eq!(f1_mentions(&[hit], &spec).unwrap().fp, 1);
        assert_eq!(f1_mentions(&[miss], &spec).unwrap().tn, 1);
    }

    #[test]
    fn input_errors() {
        let pair = EvalPair::from_text("a", &["b"]);
        assert!(f1_mentions(std::slice::from_ref(&pair), &MentionSpec::new("x", Vec::<String>::new())).is_err());
        assert!(f1_mentions(&[pair], &MentionSpec::new("x", ["  "])).is_err());
        assert!(f1_mentions(&[], &racket()).is_err());
        let no_refs = EvalPair { generated: vec![], references: vec![] };
        assert!(f1_mentions(&[no_refs], &racket()).is_err());
    }

    #[test]
    fn macro_average() {
        let pairs = vec![
            EvalPair::from_text("a racket", &["a racket"]),
            EvalPair::from_text("a dog", &["a bus"]),
        ];
        let specs = vec![racket(), MentionSpec::new("bus", ["bus"])];
        let m = macro_f1(&pairs, &specs).unwrap();
        assert_eq!(m.per_object[0].f1, 1.0);
        assert_eq!(m.per_object[1].f1, 0.0);
        assert_eq!(m.f1, 0.5);
        assert!(macro_f1(&pairs, &[]).is_err());
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "racket", "dog", "rackets", "the"]), 0..6)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn duplicate_mentions_do_not_matter(gen in words(), refs in words()) {
            let pair = EvalPair { generated: gen.clone(), references: vec![refs.clone()] };
            let mut doubled = gen.clone();
            doubled.extend(gen.iter().filter(|w| w.starts_with("racket")).cloned());
            let pair2 = EvalPair { generated: doubled, references: vec![refs] };
            prop_assert_eq!(f1_mentions(&[pair], &racket()).unwrap(), f1_mentions(&[pair2], &racket()).unwrap());
        }

        #[test]
        fn swapping_roles_swaps_precision_and_recall(
            pairs in prop::collection::vec((words(), words()), 1..12)
        ) {
            let fwd: Vec<EvalPair> = pairs.iter()
                .map(|(g, r)| EvalPair { generated: g.clone(), references: vec![r.clone()] })
                .collect();
            let back: Vec<EvalPair> = pairs.iter()
                .map(|(g, r)| EvalPair { generated: r.clone(), references: vec![g.clone()] })
                .collect();
            let a = f1_mentions(&fwd, &racket()).unwrap();
            let b = f1_mentions(&back, &racket()).unwrap();
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert_eq!(a.f1, b.f1);
        }
    }

    #[test]
    fn satisfaction_counts_recognized_sequences() {
        let chain = MarkovScorer::from_weights(
            &[1.0, 5.0, 1.0, 1.0],
            &[
                vec![1.0, 1.0, 1.0, 1.0],
                vec![6.0, 1.0, 1.0, 1.0],
                vec![5.0, 1.0, 1.0, 1.0],
                vec![5.0, 1.0, 1.0, 1.0],
            ],
            0,
        )
        .unwrap();
        let params = SearchParams { beam_size: 3, max_len: 4, ..Default::default() };
        let free = Fsm::universal(4);
        let want3 = compile_disjunctions(&DisjunctiveConstraints::new(vec![[3].into()]), 4).unwrap();
        let free_result = constrained_beam_search(&chain, &free, &params).unwrap();
        let forced = constrained_beam_search(&chain, &want3, &params).unwrap();
        assert_eq!(forced.status, Status::Accepted);
        let results = vec![free_result.clone(), forced.clone(), free_result.clone()];
        let direct = results
            .iter()
            .filter(|r| want3.recognizes(&r.best.as_ref().unwrap().tokens))
            .count() as f64
            / 3.0;
        let rate = satisfaction_rate(&results, &[&want3, &want3, &want3]).unwrap();
        assert_eq!(rate, direct);
        assert_eq!(rate, 1.0 / 3.0);
        assert_eq!(satisfaction_rate(&[forced], &[&want3]).unwrap(), 1.0);
        assert!(satisfaction_rate(&[], &[]).is_err());
        assert!(satisfaction_rate(&results, &[&want3]).is_err());
    }
}
