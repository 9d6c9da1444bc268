use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Groups of surface forms that share a lemma.
///
/// Groups that share a word are merged, so membership is an equivalence
/// relation: every word maps to a set that contains itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LemmaMap {
    group_of: HashMap<String, usize>,
    groups: Vec<BTreeSet<String>>,
}

impl LemmaMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a group, merging it with any existing group it overlaps.
    pub fn add_group<I, S>(&mut self, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return;
        }
        let mut touched: Vec<usize> = words
            .iter()
            .filter_map(|w| self.group_of.get(w).copied())
            .collect();
        touched.sort_unstable();
        touched.dedup();

        let target = match touched.first() {
            Some(&g) => g,
            None => {
                self.groups.push(BTreeSet::new());
                self.groups.len() - 1
            }
        };
        let mut merged = words;
        for &g in touched.iter().skip(1) {
            merged.extend(std::mem::take(&mut self.groups[g]));
        }
        for w in &merged {
            self.group_of.insert(w.clone(), target);
        }
        self.groups[target].extend(merged);
    }

    /// Parses the tab-separated format: one lemma group per line.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut map = LemmaMap::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            map.add_group(line.split('\t').map(str::trim));
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// All forms sharing a lemma with `word`, including `word` itself.
    pub fn forms(&self, word: &str) -> BTreeSet<String> {
        let word = word.to_lowercase();
        match self.group_of.get(&word) {
            Some(&g) => self.groups[g].clone(),
            None => BTreeSet::from([word]),
        }
    }
}

/// Token ids of every in-vocabulary word sharing `word`'s lemma.
///
/// An empty result is reported as [`Error::Unsatisfiable`]; callers decide
/// whether that is fatal.
pub fn expand_lemmas(word: &str, lemmas: &LemmaMap, v: &Vocabulary) -> Result<BTreeSet<TokenId>> {
    let ids: BTreeSet<TokenId> = lemmas
        .forms(word)
        .iter()
        .filter_map(|w| v.id(w))
        .collect();
    if ids.is_empty() {
        Err(Error::Unsatisfiable(word.to_string()))
    } else {
        Ok(ids)
    }
}
