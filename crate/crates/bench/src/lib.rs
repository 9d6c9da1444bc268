//! Fixtures shared by the benchmarks.

use std::collections::BTreeSet;

use cbsdecode::neural::WordEmbeddings;
use cbsdecode::{
    compile_disjunctions, CaptionModel, DisjunctiveConstraints, Fsm, NGramModel, TokenId,
    Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trigram model over `vocab_size - 1` synthetic words plus the end token.
/// Word frequencies are skewed so the model is not flat.
pub fn synthetic_ngram(vocab_size: usize, sentences: usize, seed: u64) -> NGramModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = vocab_size - 1;
    let mut lines: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
    for _ in 0..sentences {
        let n = rng.random_range(4..14);
        let line: Vec<String> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                format!("w{}", ((u * u * u) * words as f64) as usize)
            })
            .collect();
        lines.push(line.join(" "));
    }
    NGramModel::train_text(&lines, 3, 0.01).unwrap()
}

/// `m` disjunctive constraints of three frequent tokens each.
pub fn frequent_disjunctions(vocab: &Vocabulary, m: usize, seed: u64) -> Fsm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = (vocab.len() / 20).max(3 * m) as TokenId;
    let mut used = BTreeSet::new();
    let mut sets = Vec::new();
    while sets.len() < m {
        let mut set = BTreeSet::new();
        while set.len() < 3 {
            let t = rng.random_range(0..pool);
            let word = format!("w{t}");
            let id = vocab.id(&word).unwrap();
            if used.insert(id) {
                set.insert(id);
            }
        }
        sets.push(set);
    }
    compile_disjunctions(&DisjunctiveConstraints::new(sets), vocab.len()).unwrap()
}

/// Randomly initialized caption model over `vocab_size - 1` words.
pub fn random_caption_model(
    vocab_size: usize,
    embed_dim: usize,
    hidden: usize,
    cond_dim: usize,
    seed: u64,
) -> CaptionModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab_size - 1).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::with_words(&words);
    let mut column = || (0..embed_dim).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<f64>>();
    let cols = (0..vocab.len()).map(|_| column()).collect();
    let start = column();
    let emb = WordEmbeddings::new(embed_dim, cols, start).unwrap();
    CaptionModel::initialize(vocab, emb, hidden, cond_dim, seed).unwrap()
}
