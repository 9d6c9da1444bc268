use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{forward, LayerState, LstmLayerParams, StepCache};
use crate::error::{Error, Result};
use crate::scorer::{fresh_tag, LogDist};
use crate::vocab::{TokenId, Vocabulary};

/// Width of the pretrained word vectors the model is built around.
pub const EMBEDDING_DIM: usize = 300;

/// Uniform initialization range for trainable weights.
pub const INIT_SCALE: f64 = 0.08;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Fixed per-input feature vector fed to the second layer at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningVector(pub Vec<f64>);

impl ConditioningVector {
    pub fn zeros(dim: usize) -> Self {
        ConditioningVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for ConditioningVector {
    fn from(v: Vec<f64>) -> Self {
        ConditioningVector(v)
    }
}

/// Frozen word embeddings: one `dim`-wide column per vocabulary word, plus a
/// reserved column fed as the input at the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    dim: usize,
    /// Column `j` lives at `data[j * dim..(j + 1) * dim]`.
    data: Vec<f64>,
    start: Vec<f64>,
}

impl WordEmbeddings {
    pub fn new(dim: usize, columns: Vec<Vec<f64>>, start: Vec<f64>) -> Result<Self> {
        if start.len() != dim {
            return Err(Error::dimension("start embedding", dim, start.len()));
        }
        let mut data = Vec::with_capacity(dim * columns.len());
        for col in &columns {
            if col.len() != dim {
                return Err(Error::dimension("embedding column", dim, col.len()));
            }
            data.extend_from_slice(col);
        }
        let e = WordEmbeddings { dim, data, start };
        e.check_finite()?;
        Ok(e)
    }

    pub(crate) fn from_flat(dim: usize, data: Vec<f64>, start: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) || start.len() != dim {
            return Err(Error::Data("embedding buffer has inconsistent shape".into()));
        }
        let e = WordEmbeddings { dim, data, start };
        e.check_finite()?;
        Ok(e)
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().chain(&self.start).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("word embeddings".into()))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn column(&self, id: TokenId) -> &[f64] {
        let j = id as usize;
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn start_column(&self) -> &[f64] {
        &self.start
    }

    pub(crate) fn push_column(&mut self, col: &[f64]) {
        self.data.extend_from_slice(col);
    }

    /// All word columns back to back.
    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    fn input(&self, prev: Option<TokenId>) -> Array1<f64> {
        match prev {
            None => Array1::from(self.start.clone()),
            Some(id) => Array1::from(self.column(id).to_vec()),
        }
    }

    /// `W_e^T v`, one column at a time so each logit only depends on its own
    /// column.
    pub fn logits(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.dim).map(|col| dot(col, v)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable log-softmax.
pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Everything the trainer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableParams {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// Projects the top hidden state into embedding space (dim×N).
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
}

impl TrainableParams {
    pub fn zeros(embed_dim: usize, hidden: usize, cond_dim: usize) -> Self {
        TrainableParams {
            layer1: LstmLayerParams::zeros(embed_dim, hidden),
            layer2: LstmLayerParams::zeros(hidden + cond_dim, hidden),
            w_v: Array2::zeros((embed_dim, hidden)),
            b_v: Array1::zeros(embed_dim),
        }
    }

    pub fn random<R: Rng>(embed_dim: usize, hidden: usize, cond_dim: usize, rng: &mut R) -> Self {
        let layer1 = LstmLayerParams::random(embed_dim, hidden, INIT_SCALE, FORGET_BIAS_INIT, rng);
        let layer2 =
            LstmLayerParams::random(hidden + cond_dim, hidden, INIT_SCALE, FORGET_BIAS_INIT, rng);
        let w_v = Array2::from_shape_fn((embed_dim, hidden), |_| {
            rng.random_range(-INIT_SCALE..=INIT_SCALE)
        });
        TrainableParams {
            layer1,
            layer2,
            w_v,
            b_v: Array1::zeros(embed_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        TrainableParams::zeros(
            self.w_v.nrows(),
            self.layer1.hidden(),
            self.layer2.input_dim() - self.layer1.hidden(),
        )
    }

    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(26);
        for (lname, layer) in [("layer1", &self.layer1), ("layer2", &self.layer2)] {
            for (gname, g) in ["input", "forget", "output", "cell"].iter().zip(layer.gates()) {
                out.push((format!("{lname}.{gname}.w_x"), g.w_x.as_slice().unwrap()));
                out.push((format!("{lname}.{gname}.w_h"), g.w_h.as_slice().unwrap()));
                out.push((format!("{lname}.{gname}.b"), g.b.as_slice().unwrap()));
            }
        }
        out.push(("w_v".into(), self.w_v.as_slice().unwrap()));
        out.push(("b_v".into(), self.b_v.as_slice().unwrap()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(26);
        for (lname, layer) in [("layer1", &mut self.layer1), ("layer2", &mut self.layer2)] {
            for (gname, g) in ["input", "forget", "output", "cell"].iter().zip(layer.gates_mut()) {
                out.push((format!("{lname}.{gname}.w_x"), g.w_x.as_slice_mut().unwrap()));
                out.push((format!("{lname}.{gname}.w_h"), g.w_h.as_slice_mut().unwrap()));
                out.push((format!("{lname}.{gname}.b"), g.b.as_slice_mut().unwrap()));
            }
        }
        out.push(("w_v".into(), self.w_v.as_slice_mut().unwrap()));
        out.push(("b_v".into(), self.b_v.as_slice_mut().unwrap()));
        out
    }

    /// Calls `f` with every named tensor, in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(&str, &[f64])) {
        for (name, t) in self.tensors() {
            f(&name, t);
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (name, t) in self.tensors_mut() {
            f(&name, t);
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &TrainableParams, scale: f64) {
        let src = other.tensors();
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }
}

/// Per-layer hidden and cell vectors carried between decoding steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub layer1: LayerState,
    pub layer2: LayerState,
}

/// A word appended to the vocabulary after training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExpansionRecord {
    pub word: String,
    pub id: TokenId,
    /// Position in the model's expansion history, from 0.
    pub order: usize,
}

/// Two-layer factored LSTM language model with an embedding-tied output.
///
/// The bottom layer reads the embedding of the previous word, the top layer
/// reads the bottom layer's output concatenated with a conditioning vector,
/// and the next-word distribution is `softmax(W_e^T tanh(W_v h² + b_v))`.
/// `W_e` is frozen; adding a word only appends a column to it.
#[derive(Debug, Clone)]
pub struct CaptionModel {
    pub(crate) vocab: Vocabulary,
    pub(crate) embeddings: WordEmbeddings,
    pub(crate) params: TrainableParams,
    pub(crate) cond_dim: usize,
    pub(crate) expansions: Vec<ExpansionRecord>,
    pub(crate) tag: u64,
}

impl PartialEq for CaptionModel {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.embeddings == other.embeddings
            && self.params == other.params
            && self.cond_dim == other.cond_dim
            && self.expansions == other.expansions
    }
}

impl CaptionModel {
    pub fn new(
        vocab: Vocabulary,
        embeddings: WordEmbeddings,
        params: TrainableParams,
        cond_dim: usize,
    ) -> Result<Self> {
        if embeddings.len() != vocab.len() {
            return Err(Error::dimension("embedding columns", vocab.len(), embeddings.len()));
        }
        let d = embeddings.dim();
        params.layer1.check()?;
        params.layer2.check()?;
        let n = params.layer1.hidden();
        if params.layer1.input_dim() != d {
            return Err(Error::dimension("layer 1 input", d, params.layer1.input_dim()));
        }
        if params.layer2.input_dim() != n + cond_dim || params.layer2.hidden() != n {
            return Err(Error::dimension(
                "layer 2 input",
                n + cond_dim,
                params.layer2.input_dim(),
            ));
        }
        if params.w_v.dim() != (d, n) || params.b_v.len() != d {
            return Err(Error::dimension("output projection", d * n, params.w_v.len()));
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(name));
        }
        Ok(CaptionModel {
            vocab,
            embeddings,
            params,
            cond_dim,
            expansions: Vec::new(),
            tag: fresh_tag(),
        })
    }

    /// Small-uniform initialization from a seeded generator.
    pub fn initialize(
        vocab: Vocabulary,
        embeddings: WordEmbeddings,
        hidden: usize,
        cond_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = TrainableParams::random(embeddings.dim(), hidden, cond_dim, &mut rng);
        CaptionModel::new(vocab, embeddings, params, cond_dim)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn embeddings(&self) -> &WordEmbeddings {
        &self.embeddings
    }

    pub fn params(&self) -> &TrainableParams {
        &self.params
    }

    /// Mutable access to the trainable parameters. The embeddings have no
    /// mutable accessor.
    pub fn params_mut(&mut self) -> &mut TrainableParams {
        &mut self.params
    }

    pub fn hidden(&self) -> usize {
        self.params.layer1.hidden()
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn expansions(&self) -> &[ExpansionRecord] {
        &self.expansions
    }

    pub(crate) fn tag(&self) -> u64 {
        self.tag
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState {
            layer1: LayerState::zeros(self.hidden()),
            layer2: LayerState::zeros(self.hidden()),
        }
    }

    fn check_inputs(
        &self,
        prev: Option<TokenId>,
        state: &LstmState,
        cond: &ConditioningVector,
    ) -> Result<()> {
        if let Some(t) = prev {
            self.vocab.check(t)?;
        }
        if cond.dim() != self.cond_dim {
            return Err(Error::dimension("conditioning vector", self.cond_dim, cond.dim()));
        }
        if !cond.0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("conditioning vector".into()));
        }
        let n = self.hidden();
        for v in [&state.layer1.h, &state.layer1.c, &state.layer2.h, &state.layer2.c] {
            if v.len() != n {
                return Err(Error::dimension("lstm state", n, v.len()));
            }
        }
        Ok(())
    }

    pub(crate) fn step_cached(
        &self,
        prev: Option<TokenId>,
        state: &LstmState,
        cond: &Array1<f64>,
    ) -> StepTrace {
        let x1 = self.embeddings.input(prev);
        let l1 = forward(
            &self.params.layer1,
            x1.view(),
            state.layer1.h.view(),
            state.layer1.c.view(),
        );
        let x2 = concatenate(Axis(0), &[l1.h.view(), cond.view()]).expect("1-d concat");
        let l2 = forward(
            &self.params.layer2,
            x2.view(),
            state.layer2.h.view(),
            state.layer2.c.view(),
        );
        let v = (self.params.w_v.dot(&l2.h) + &self.params.b_v).mapv_into(f64::tanh);
        let logits = self.embeddings.logits(v.as_slice().unwrap());
        StepTrace { l1, l2, v, logits }
    }

    /// Raw output logits for the next word, and the advanced state.
    pub fn forward_logits(
        &self,
        prev: Option<TokenId>,
        state: &LstmState,
        cond: &ConditioningVector,
    ) -> Result<(LstmState, Vec<f64>)> {
        self.check_inputs(prev, state, cond)?;
        let trace = self.step_cached(prev, state, &Array1::from(cond.0.clone()));
        Ok((trace.state(), trace.logits))
    }

    /// Consumes `prev` (`None` for the start of the sequence) and returns the
    /// log-distribution over the next word.
    pub fn forward_step(
        &self,
        prev: Option<TokenId>,
        state: &LstmState,
        cond: &ConditioningVector,
    ) -> Result<(LstmState, LogDist)> {
        let (next, logits) = self.forward_logits(prev, state, cond)?;
        Ok((next, log_softmax(&logits)))
    }

    /// Mean teacher-forced cross-entropy of `seq` (which should end with
    /// end-of-sequence).
    pub fn sequence_loss(&self, seq: &[TokenId], cond: &ConditioningVector) -> Result<f64> {
        self.sequence_loss_with(seq, cond, |_| {})
    }

    /// [`CaptionModel::sequence_loss`] with a hook that may rewrite the
    /// logits of every step before normalization.
    #[doc(hidden)]
    pub fn sequence_loss_with(
        &self,
        seq: &[TokenId],
        cond: &ConditioningVector,
        mut hook: impl FnMut(&mut Vec<f64>),
    ) -> Result<f64> {
        if seq.is_empty() {
            return Err(Error::Empty("sequence"));
        }
        let mut state = self.initial_state();
        let mut prev = None;
        let mut total = 0.0;
        for &y in seq {
            self.vocab.check(y)?;
            let (next, mut logits) = self.forward_logits(prev, &state, cond)?;
            hook(&mut logits);
            total -= log_softmax(&logits)[y as usize];
            state = next;
            prev = Some(y);
        }
        Ok(total / seq.len() as f64)
    }
}

pub(crate) struct StepTrace {
    pub l1: StepCache,
    pub l2: StepCache,
    pub v: Array1<f64>,
    pub logits: Vec<f64>,
}

impl StepTrace {
    pub fn state(&self) -> LstmState {
        LstmState {
            layer1: LayerState {
                h: self.l1.h.clone(),
                c: self.l1.c.clone(),
            },
            layer2: LayerState {
                h: self.l2.h.clone(),
                c: self.l2.c.clone(),
            },
        }
    }
}
