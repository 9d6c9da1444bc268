use cbsdecode::neural::{LrSchedule, TrainableParams, WordEmbeddings};
use cbsdecode::scorer::mass;
use cbsdecode::{
    beam_search, train, CaptionModel, ConditioningVector, MarkovScorer, NGramModel, NeuralScorer,
    Scorer, SearchParams, TokenId, TrainConfig, TrainingExample, UniformScorer, Vocabulary,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Steps `scorer` through `tokens`, checking every emitted distribution and
/// that a cloned state behaves identically. Returns the chain-rule sum.
fn walk<S: Scorer>(scorer: &S, tokens: &[TokenId], tol: f64) -> f64 {
    let (mut state, mut dist) = scorer.start().unwrap();
    let mut total = 0.0;
    for &t in tokens {
        assert!((mass(&dist) - 1.0).abs() <= tol, "mass {}", mass(&dist));
        total += dist[t as usize];
        let copy = state.clone();
        let (next, d) = scorer.step(&state, t).unwrap();
        let (_, d2) = scorer.step(&copy, t).unwrap();
        assert_eq!(d, d2);
        state = next;
        dist = d;
    }
    total
}

fn ngram(seed: u64) -> NGramModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["a", "b", "c", "d", "e"];
    let lines: Vec<String> = (0..100)
        .map(|_| {
            let n = rng.random_range(1..6);
            (0..n).map(|_| words[rng.random_range(0..5)]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    NGramModel::train_text(&lines, 3, 0.3).unwrap()
}

fn neural(seed: u64) -> CaptionModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (1..6).map(|i| format!("w{i}")).collect();
    let cols = (0..6)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let emb = WordEmbeddings::new(4, cols, vec![0.1, -0.2, 0.3, -0.4]).unwrap();
    let mut p = TrainableParams::zeros(4, 3, 2);
    p.visit_mut(|_, t| t.iter_mut().for_each(|x| *x = rng.random_range(-0.7..0.7)));
    CaptionModel::new(Vocabulary::with_words(&words), emb, p, 2).unwrap()
}

fn seq() -> impl Strategy<Value = Vec<TokenId>> {
    prop::collection::vec(1..6u32, 0..7).prop_map(|mut v| {
        v.push(0);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_conforms(tokens in seq()) {
        let s = UniformScorer::new(6, 0).unwrap();
        let total = walk(&s, &tokens, 1e-12);
        prop_assert!((total - tokens.len() as f64 * (1.0f64 / 6.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn markov_conforms(tokens in seq(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = || (0..6).map(|_| rng.random_range(0.1..1.0)).collect::<Vec<f64>>();
        let initial = w();
        let rows: Vec<Vec<f64>> = (0..6).map(|_| w()).collect();
        let m = MarkovScorer::from_weights(&initial, &rows, 0).unwrap();
        let total = walk(&m, &tokens, 1e-12);
        let mut direct = m.initial()[tokens[0] as usize];
        for pair in tokens.windows(2) {
            direct += m.transition(pair[0])[pair[1] as usize];
        }
        prop_assert!((total - direct).abs() < 1e-12);
    }

    #[test]
    fn ngram_conforms(tokens in seq(), seed in 0u64..50) {
        let m = ngram(seed);
        let total = walk(&m, &tokens, 1e-12);
        let mut direct = 0.0;
        for i in 0..tokens.len() {
            direct += m.logprob(&tokens[..i], tokens[i]).unwrap();
        }
        prop_assert!((total - direct).abs() < 1e-12);
        prop_assert!((total - m.sequence_logprob(&tokens).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn neural_conforms(tokens in seq(), seed in 0u64..50, c0 in -2.0..2.0f64, c1 in -2.0..2.0f64) {
        let m = neural(seed);
        let cond = ConditioningVector(vec![c0, c1]);
        let s = NeuralScorer::new(&m, cond.clone()).unwrap();
        let total = walk(&s, &tokens, 1e-6);
        let loss = m.sequence_loss(&tokens, &cond).unwrap();
        prop_assert!((total + loss * tokens.len() as f64).abs() < 1e-10);
    }
}

#[test]
fn greedy_decode_after_training_reproduces_the_majority_pattern() {
    let vocab = Vocabulary::with_words(["the", "cat", "sat", "dog", "ran"]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cols = (0..vocab.len())
        .map(|_| (0..8).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let start = (0..8).map(|_| rng.random_range(-1.5..1.5)).collect();
    let emb = WordEmbeddings::new(8, cols, start).unwrap();
    let model = CaptionModel::initialize(vocab.clone(), emb, 16, 1, 3).unwrap();
    let majority = vocab.encode(&["the", "cat", "sat"]).unwrap();
    let minority = vocab.encode(&["the", "dog", "ran"]).unwrap();
    let corpus: Vec<TrainingExample> = (0..20)
        .map(|i| {
            let mut ids = if i % 5 == 0 { minority.clone() } else { majority.clone() };
            ids.push(vocab.eos());
            TrainingExample::new(vec![1.0], ids)
        })
        .collect();
    let config = TrainConfig {
        epochs: 60,
        lr: LrSchedule::Constant { lr: 1.0 },
        batch_size: 5,
        seed: 4,
    };
    let (trained, _) = train(&model, &corpus, &config).unwrap();
    let scorer = NeuralScorer::new(&trained, ConditioningVector(vec![1.0])).unwrap();
    let params = SearchParams {
        beam_size: 1,
        ..Default::default()
    };
    let best = beam_search(&scorer, &params).unwrap().unwrap();
    assert_eq!(trained.vocab().render(&best.tokens), "the cat sat");
}
