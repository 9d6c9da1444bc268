use serde::{Deserialize, Serialize};

use super::{DecodeResult, Status};
use crate::fsm::StateId;
use crate::vocab::{TokenId, Vocabulary};

/// One line of decode output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: serde_json::Value,
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub logprob: Option<f64>,
    pub status: Status,
    pub fsm_state: Option<StateId>,
    pub satisfied_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_state_best: Option<Vec<Option<StateBest>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBest {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub logprob: f64,
}

impl DecodeRecord {
    pub fn new(
        id: serde_json::Value,
        result: &DecodeResult,
        vocab: &Vocabulary,
        with_per_state: bool,
    ) -> Self {
        let best = result.best.as_ref();
        DecodeRecord {
            id,
            tokens: best.map(|h| h.tokens.clone()).unwrap_or_default(),
            text: best.map(|h| vocab.render(&h.tokens)).unwrap_or_default(),
            logprob: best.map(|h| h.logprob),
            status: result.status,
            fsm_state: best.map(|h| h.fsm_state),
            satisfied_count: result.satisfied_count,
            per_state_best: with_per_state.then(|| {
                result
                    .per_state_best
                    .iter()
                    .map(|h| {
                        h.as_ref().map(|h| StateBest {
                            tokens: h.tokens.clone(),
                            text: vocab.render(&h.tokens),
                            logprob: h.logprob,
                        })
                    })
                    .collect()
            }),
        }
    }
}
