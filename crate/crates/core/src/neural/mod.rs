//! Two-layer LSTM language model with frozen, tied word embeddings.

mod backprop;
mod checkpoint;
mod lstm;
mod model;
mod scorer;
mod train;

pub use backprop::{batch_loss, gradients, TrainingExample};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use lstm::{lstm_step, Gate, LayerState, LstmLayerParams};
pub use model::{
    log_softmax, CaptionModel, ConditioningVector, ExpansionRecord, LstmState, TrainableParams,
    WordEmbeddings, EMBEDDING_DIM, FORGET_BIAS_INIT, INIT_SCALE,
};
pub use scorer::{NeuralScorer, NeuralState};
pub use train::{train, LrSchedule, TrainConfig, TrainReport};
