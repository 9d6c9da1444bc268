//! Constrained sequence decoding.
//!
//! Word-level constraints compile into deterministic finite-state machines
//! ([`fsm`]); [`search`] runs beam search with one beam per machine state
//! over any [`scorer::Scorer`]. [`neural`] provides a two-layer LSTM language
//! model whose output layer is tied to frozen word embeddings, which lets
//! [`embedding`] add words at test time by appending embedding columns.
//! [`eval`] scores decodes.

pub mod embedding;
pub mod error;
pub mod eval;
pub mod fsm;
pub mod neural;
pub mod scorer;
pub mod search;
pub mod vocab;

pub use embedding::{
    bind_embeddings, expand_vocab, load_embeddings, nearest_neighbors, EmbeddingTable,
};
pub use error::{Error, Result};
pub use eval::{f1_mentions, macro_f1, satisfaction_rate, EvalPair, F1Report, MentionSpec};
pub use fsm::{
    compile_disjunctions, compile_phrase, expand_lemmas, intersect, ConstraintSpec,
    DisjunctiveConstraints, Fsm, FsmDump, LemmaMap, PhraseConstraint, StateId,
};
pub use neural::{
    train, CaptionModel, ConditioningVector, NeuralScorer, TrainConfig, TrainingExample,
};
pub use scorer::{LogDist, MarkovScorer, NGramModel, Scorer, UniformScorer};
pub use search::{
    beam_search, constrained_beam_search, decode_best_of, decode_multi_phrase, exhaustive_search,
    DecodeRecord, DecodeResult, Hypothesis, MultiDecode, SearchParams, Status,
};
pub use vocab::{tokenize, TokenId, Vocabulary, EOS};
