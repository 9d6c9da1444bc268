use super::model::{CaptionModel, ConditioningVector, LstmState};
use crate::error::{Error, Result};
use crate::scorer::{LogDist, Scorer};
use crate::vocab::TokenId;

/// A trained model bound to the conditioning vector of one input.
#[derive(Debug, Clone)]
pub struct NeuralScorer<'m> {
    model: &'m CaptionModel,
    cond: ConditioningVector,
}

#[derive(Debug, Clone)]
pub struct NeuralState {
    tag: u64,
    lstm: LstmState,
}

impl NeuralState {
    pub fn lstm(&self) -> &LstmState {
        &self.lstm
    }
}

impl<'m> NeuralScorer<'m> {
    pub fn new(model: &'m CaptionModel, cond: ConditioningVector) -> Result<Self> {
        if cond.dim() != model.cond_dim() {
            return Err(Error::dimension("conditioning vector", model.cond_dim(), cond.dim()));
        }
        if !cond.0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("conditioning vector".into()));
        }
        Ok(NeuralScorer { model, cond })
    }

    pub fn model(&self) -> &CaptionModel {
        self.model
    }
}

impl Scorer for NeuralScorer<'_> {
    type State = NeuralState;

    fn vocab_size(&self) -> usize {
        self.model.vocab().len()
    }

    fn eos(&self) -> TokenId {
        self.model.vocab().eos()
    }

    fn start(&self) -> Result<(NeuralState, LogDist)> {
        let (lstm, dist) = self
            .model
            .forward_step(None, &self.model.initial_state(), &self.cond)?;
        Ok((
            NeuralState {
                tag: self.model.tag(),
                lstm,
            },
            dist,
        ))
    }

    fn step(&self, state: &NeuralState, token: TokenId) -> Result<(NeuralState, LogDist)> {
        if state.tag != self.model.tag() {
            return Err(Error::contract("state was produced by a different model"));
        }
        let (lstm, dist) = self.model.forward_step(Some(token), &state.lstm, &self.cond)?;
        Ok((
            NeuralState {
                tag: state.tag,
                lstm,
            },
            dist,
        ))
    }
}
