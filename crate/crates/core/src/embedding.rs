//! Pretrained word vectors: loading, binding to a vocabulary, and adding
//! words to a trained model.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{CaptionModel, ExpansionRecord, WordEmbeddings};
use crate::scorer::fresh_tag;
use crate::vocab::{TokenId, Vocabulary};

/// Word vectors keyed by lower-cased surface form.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

/// Result of reading an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    /// Needed words the file did not contain, sorted.
    pub missing: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Adds or replaces a vector.
    pub fn insert(&mut self, word: &str, vec: Vec<f64>) -> Result<()> {
        if vec.len() != self.dim {
            return Err(Error::dimension(format!("embedding of {word:?}"), self.dim, vec.len()));
        }
        if !vec.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of {word:?}")));
        }
        self.vectors.insert(word.to_lowercase(), vec);
        Ok(())
    }

    /// Parses `word v1 … vd` lines. The dimension is taken from the first
    /// entry. With `needed`, only those words are kept. The first occurrence
    /// of a word (after lower-casing) wins.
    pub fn from_reader<R: BufRead>(
        reader: R,
        path: &Path,
        needed: Option<&HashSet<String>>,
    ) -> Result<LoadedEmbeddings> {
        let needed: Option<HashSet<String>> =
            needed.map(|n| n.iter().map(|w| w.to_lowercase()).collect());
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let mut fields = line.split_ascii_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let values: Vec<&str> = fields.collect();
            let d = *dim.get_or_insert(values.len());
            if d == 0 {
                return Err(parse_err(lineno, "entry has no vector".into()));
            }
            if values.len() != d {
                return Err(parse_err(
                    lineno,
                    format!("expected {d} values, found {}", values.len()),
                ));
            }
            let word = word.to_lowercase();
            if needed.as_ref().is_some_and(|n| !n.contains(&word)) || vectors.contains_key(&word)
            {
                continue;
            }
            let mut vec = Vec::with_capacity(d);
            for v in values {
                let x: f64 = v
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("{v:?} is not a number")))?;
                if !x.is_finite() {
                    return Err(parse_err(lineno, format!("{v:?} is not finite")));
                }
                vec.push(x);
            }
            vectors.insert(word, vec);
        }
        let Some(dim) = dim else {
            return Err(Error::Empty("embedding file"));
        };
        let mut missing: Vec<String> = needed
            .map(|n| n.into_iter().filter(|w| !vectors.contains_key(w)).collect())
            .unwrap_or_default();
        missing.sort();
        Ok(LoadedEmbeddings {
            table: EmbeddingTable { dim, vectors },
            missing,
        })
    }

    /// Writes the table in the text format [`load_embeddings`] reads.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (word, vec) in &self.vectors {
            write!(w, "{word}")?;
            for v in vec {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streams an embedding file, keeping only `needed` words when given.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    needed: Option<&HashSet<String>>,
) -> Result<LoadedEmbeddings> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = File::open(&path)?;
    let loaded = EmbeddingTable::from_reader(BufReader::new(file), &path, needed)?;
    log::info!(
        "loaded {} vectors of dimension {} from {}",
        loaded.table.len(),
        loaded.table.dim(),
        path.display()
    );
    Ok(loaded)
}

fn reserved_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Builds the frozen embedding matrix for `vocab`. The start-of-sequence
/// input, and end-of-sequence when the table lacks it, get fixed vectors
/// drawn from `seed`. Any other word missing from the table is an error
/// listing all of them.
pub fn bind_embeddings(vocab: &Vocabulary, table: &EmbeddingTable, seed: u64) -> Result<WordEmbeddings> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = reserved_vector(table.dim(), &mut rng);
    let eos_fallback = reserved_vector(table.dim(), &mut rng);
    let mut columns = Vec::with_capacity(vocab.len());
    let mut missing = Vec::new();
    for (id, word) in vocab.tokens().iter().enumerate() {
        match table.get(word) {
            Some(v) => columns.push(v.to_vec()),
            None if id as TokenId == vocab.eos() => columns.push(eos_fallback.clone()),
            None => missing.push(word.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    WordEmbeddings::new(table.dim(), columns, start)
}

/// Returns a copy of `model` with `word` appended to the vocabulary and
/// `vec` appended to the embedding matrix. Nothing else changes.
pub fn expand_vocab(model: &CaptionModel, word: &str, vec: &[f64]) -> Result<(CaptionModel, TokenId)> {
    let word = word.to_lowercase();
    if model.vocab.id(&word).is_some() {
        return Err(Error::Data(format!("{word:?} is already in the vocabulary")));
    }
    if vec.len() != model.embed_dim() {
        return Err(Error::dimension(
            format!("embedding of {word:?}"),
            model.embed_dim(),
            vec.len(),
        ));
    }
    if !vec.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("embedding of {word:?}")));
    }
    let mut out = model.clone();
    let id = out.vocab.push(&word)?;
    out.embeddings.push_column(vec);
    out.expansions.push(ExpansionRecord {
        word,
        id,
        order: model.expansions.len(),
    });
    out.tag = fresh_tag();
    Ok((out, id))
}

/// One entry of an expansion manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub word: String,
    pub source: String,
}

pub const MANIFEST_SOURCE: &str = "embedding-file";

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Expands `model` with every manifest word, in order, taking vectors from
/// `table`. Words the table lacks are reported together.
pub fn apply_manifest(
    model: &CaptionModel,
    manifest: &[ManifestEntry],
    table: &EmbeddingTable,
) -> Result<CaptionModel> {
    if let Some(e) = manifest.iter().find(|e| e.source != MANIFEST_SOURCE) {
        return Err(Error::Config(format!(
            "unsupported expansion source {:?} for {:?}",
            e.source, e.word
        )));
    }
    let missing: Vec<String> = manifest
        .iter()
        .filter(|e| table.get(&e.word).is_none())
        .map(|e| e.word.to_lowercase())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    let mut out = model.clone();
    for e in manifest {
        out = expand_vocab(&out, &e.word, table.get(&e.word).unwrap())?.0;
    }
    Ok(out)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` words most similar to `word`, excluding `word` itself. Equal
/// similarities are ordered lexicographically.
pub fn nearest_neighbors(table: &EmbeddingTable, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let key = word.to_lowercase();
    let query = table
        .vectors
        .get(&key)
        .ok_or_else(|| Error::UnknownToken(word.to_string()))?;
    let mut scored: Vec<(String, f64)> = table
        .vectors
        .iter()
        .filter(|(w, _)| **w != key)
        .map(|(w, v)| (w.clone(), cosine(query, v)))
        .collect();
    let by_rank = |a: &(String, f64), b: &(String, f64)| {
        b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
    };
    if k < scored.len() {
        scored.select_nth_unstable_by(k, by_rank);
        scored.truncate(k);
    }
    scored.sort_by(by_rank);
    Ok(scored)
}
