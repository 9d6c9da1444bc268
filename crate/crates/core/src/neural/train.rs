use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{batch_loss, gradients, TrainingExample};
use super::model::CaptionModel;
use crate::error::{Error, Result};

/// Learning rate as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// `lr * factor^(epoch / every)`
    StepDecay { lr: f64, factor: f64, every: usize },
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::StepDecay { lr, factor, every } => {
                lr * factor.powi((epoch / every.max(1)) as i32)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Constant { lr } => lr.is_finite() && lr >= 0.0,
            LrSchedule::StepDecay { lr, factor, every } => {
                lr.is_finite() && lr >= 0.0 && factor.is_finite() && factor > 0.0 && every > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad learning-rate schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: LrSchedule::Constant { lr: 0.5 },
            batch_size: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean corpus loss before training, then after every epoch.
    pub loss_curve: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.loss_curve[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_curve.last().unwrap()
    }
}

/// Minibatch SGD. Returns the trained model; `model` itself is untouched.
pub fn train(
    model: &CaptionModel,
    corpus: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(CaptionModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    config.lr.validate()?;

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut curve = vec![batch_loss(&model, corpus)?];
    log::info!("epoch 0: loss {:.6}", curve[0]);

    for epoch in 1..=config.epochs {
        let lr = config.lr.at(epoch - 1);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let (loss, grads) = match gradients(&model, &batch) {
                Ok(r) => r,
                Err(Error::NonFinite(what)) => {
                    log::error!("epoch {epoch}: non-finite {what}");
                    return Err(Error::Divergence {
                        epoch,
                        loss: f64::NAN,
                    });
                }
                Err(e) => return Err(e),
            };
            debug_assert!(loss.is_finite());
            model.params_mut().add_scaled(&grads, -lr);
        }
        let loss = batch_loss(&model, corpus)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        if let Some(name) = model.params().first_non_finite() {
            log::error!("epoch {epoch}: parameter {name} is non-finite");
            return Err(Error::Divergence { epoch, loss });
        }
        log::info!("epoch {epoch}: loss {loss:.6} (lr {lr})");
        curve.push(loss);
    }
    Ok((model, TrainReport { loss_curve: curve }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::WordEmbeddings;
    use crate::vocab::Vocabulary;
    use rand::Rng;

    fn setup() -> (CaptionModel, Vec<TrainingExample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vocab = Vocabulary::with_words(["a", "dog", "cat", "runs"]);
        let d = 6;
        let cols = (0..vocab.len())
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let start = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let emb = WordEmbeddings::new(d, cols, start).unwrap();
        let model = CaptionModel::initialize(vocab, emb, 8, 2, 9).unwrap();
        let corpus = vec![
            TrainingExample::new(vec![1.0, 0.0], vec![1, 2, 4, 0]),
            TrainingExample::new(vec![0.0, 1.0], vec![1, 3, 4, 0]),
        ];
        (model, corpus)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (model, corpus) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            lr: LrSchedule::Constant { lr: 0.0 },
            batch_size: 1,
            seed: 1,
        };
        let (trained, report) = train(&model, &corpus, &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(report.loss_curve.iter().all(|l| *l == report.loss_curve[0]));
        assert_eq!(report.loss_curve.len(), 4);
    }

    #[test]
    fn training_lowers_loss_and_keeps_embeddings() {
        let (model, corpus) = setup();
        let cfg = TrainConfig {
            epochs: 100,
            lr: LrSchedule::Constant { lr: 2.0 },
            batch_size: 2,
            seed: 1,
        };
        let (trained, report) = train(&model, &corpus, &cfg).unwrap();
        assert!(report.final_loss() < 0.5 * report.initial_loss(), "{:?}", report.loss_curve);
        let a: Vec<u64> = model.embeddings().raw().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = trained.embeddings().raw().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        // conditioning selects the noun
        let (s, _) = trained
            .forward_step(None, &trained.initial_state(), &corpus[1].cond)
            .unwrap();
        let (_, d) = trained.forward_step(Some(1), &s, &corpus[1].cond).unwrap();
        assert!(d[3] > d[2]);
    }

    #[test]
    fn same_seed_same_model() {
        let (model, corpus) = setup();
        let cfg = TrainConfig {
            epochs: 4,
            lr: LrSchedule::Constant { lr: 0.3 },
            batch_size: 1,
            seed: 42,
        };
        let a = train(&model, &corpus, &cfg).unwrap();
        let b = train(&model, &corpus, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut model, corpus) = setup();
        model.params_mut().w_v[[0, 0]] = f64::NAN;
        let err = train(&model, &corpus, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }));
        assert!(err.is_numeric(), "{err}");
    }

    #[test]
    fn config_errors() {
        let (model, corpus) = setup();
        let mut cfg = TrainConfig::default();
        assert!(train(&model, &[], &cfg).is_err());
        cfg.batch_size = 0;
        assert!(matches!(train(&model, &corpus, &cfg), Err(Error::Config(_))));
        cfg.batch_size = 1;
        cfg.lr = LrSchedule::Constant { lr: -1.0 };
        assert!(matches!(train(&model, &corpus, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn step_decay() {
        let s = LrSchedule::StepDecay {
            lr: 1.0,
            factor: 0.5,
            every: 10,
        };
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(9), 1.0);
        assert_eq!(s.at(10), 0.5);
        assert_eq!(s.at(25), 0.25);
    }
}
