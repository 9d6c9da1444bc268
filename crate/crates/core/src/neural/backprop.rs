use ndarray::Array1;

use super::lstm::{accumulate_outer, backward, split_input_grad};
use super::model::{log_softmax, CaptionModel, ConditioningVector, StepTrace, TrainableParams};
use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// One training sentence with the conditioning vector it was produced for.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub cond: ConditioningVector,
    /// Target tokens, ending with end-of-sequence.
    pub tokens: Vec<TokenId>,
}

impl TrainingExample {
    pub fn new(cond: impl Into<ConditioningVector>, tokens: Vec<TokenId>) -> Self {
        TrainingExample {
            cond: cond.into(),
            tokens,
        }
    }
}

fn check_batch(model: &CaptionModel, batch: &[TrainingExample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    for ex in batch {
        if ex.tokens.is_empty() {
            return Err(Error::Empty("training sequence"));
        }
        for &t in &ex.tokens {
            model.vocab().check(t)?;
        }
        if ex.cond.dim() != model.cond_dim() {
            return Err(Error::dimension("conditioning vector", model.cond_dim(), ex.cond.dim()));
        }
    }
    Ok(())
}

/// Mean over the batch of each sequence's mean per-token cross-entropy.
pub fn batch_loss(model: &CaptionModel, batch: &[TrainingExample]) -> Result<f64> {
    check_batch(model, batch)?;
    let mut total = 0.0;
    for ex in batch {
        total += model.sequence_loss(&ex.tokens, &ex.cond)?;
    }
    Ok(total / batch.len() as f64)
}

/// Adds the gradient of `scale * (sum of token cross-entropies of ex)` into
/// `grads` and returns the unscaled summed cross-entropy.
fn sequence_backward(
    model: &CaptionModel,
    ex: &TrainingExample,
    scale: f64,
    grads: &mut TrainableParams,
) -> f64 {
    let cond = Array1::from(ex.cond.0.clone());
    let mut state = model.initial_state();
    let mut prev = None;
    let mut traces: Vec<StepTrace> = Vec::with_capacity(ex.tokens.len());
    for &y in &ex.tokens {
        let trace = model.step_cached(prev, &state, &cond);
        state = trace.state();
        traces.push(trace);
        prev = Some(y);
    }

    let p = model.params();
    let emb = model.embeddings();
    let n = model.hidden();
    let mut loss = 0.0;
    let mut dh1_next = Array1::zeros(n);
    let mut dc1_next = Array1::zeros(n);
    let mut dh2_next = Array1::zeros(n);
    let mut dc2_next = Array1::zeros(n);
    for (trace, &y) in traces.iter().zip(&ex.tokens).rev() {
        let logp = log_softmax(&trace.logits);
        loss -= logp[y as usize];
        // dz = softmax - onehot; dv = E dz
        let mut dv = Array1::<f64>::zeros(emb.dim());
        for (j, lp) in logp.iter().enumerate() {
            let dz = scale * (lp.exp() - if j == y as usize { 1.0 } else { 0.0 });
            if dz != 0.0 {
                dv.scaled_add(dz, &ndarray::ArrayView1::from(emb.column(j as TokenId)));
            }
        }
        let da_v = dv * &trace.v.mapv(|t| 1.0 - t * t);
        accumulate_outer(&mut grads.w_v, &da_v, &trace.l2.h);
        grads.b_v += &da_v;
        let dh2 = p.w_v.t().dot(&da_v) + &dh2_next;
        let (dx2, dh2_prev, dc2_prev) =
            backward(&p.layer2, &trace.l2, &dh2, &dc2_next, &mut grads.layer2);
        let dh1 = split_input_grad(&dx2, n) + &dh1_next;
        // The layer-1 input gradient would flow into the frozen embeddings.
        let (_, dh1_prev, dc1_prev) =
            backward(&p.layer1, &trace.l1, &dh1, &dc1_next, &mut grads.layer1);
        dh1_next = dh1_prev;
        dc1_next = dc1_prev;
        dh2_next = dh2_prev;
        dc2_next = dc2_prev;
    }
    loss
}

/// Loss as in [`batch_loss`] and its gradient with respect to every
/// trainable parameter. The embeddings get no gradient.
pub fn gradients(
    model: &CaptionModel,
    batch: &[TrainingExample],
) -> Result<(f64, TrainableParams)> {
    check_batch(model, batch)?;
    let mut grads = model.params().zeros_like();
    let mut loss = 0.0;
    let b = batch.len() as f64;
    for ex in batch {
        let len = ex.tokens.len() as f64;
        loss += sequence_backward(model, ex, 1.0 / (b * len), &mut grads) / len;
    }
    loss /= b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::WordEmbeddings;
    use crate::vocab::Vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(v: usize, d: usize, n: usize, f: usize, seed: u64) -> CaptionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = (1..v).map(|i| format!("w{i}")).collect();
        let cols = (0..v)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let start = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let emb = WordEmbeddings::new(d, cols, start).unwrap();
        let mut params = TrainableParams::zeros(d, n, f);
        params.visit_mut(|_, t| t.iter_mut().for_each(|x| *x = rng.random_range(-0.6..0.6)));
        CaptionModel::new(Vocabulary::with_words(&words), emb, params, f).unwrap()
    }

    fn batch(v: usize, f: usize, seed: u64) -> Vec<TrainingExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..3)
            .map(|_| {
                let len = rng.random_range(1..5);
                let mut toks: Vec<TokenId> =
                    (0..len).map(|_| rng.random_range(1..v as TokenId)).collect();
                toks.push(0);
                let cond: Vec<f64> = (0..f).map(|_| rng.random_range(-1.0..1.0)).collect();
                TrainingExample::new(cond, toks)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = model(6, 4, 3, 2, 11);
        let data = batch(6, 2, 12);
        let (loss, g) = gradients(&m, &data).unwrap();
        assert!((loss - batch_loss(&m, &data).unwrap()).abs() < 1e-12);
        let mut flat = Vec::new();
        g.visit(|name, t| flat.extend(t.iter().map(|v| (name.to_string(), *v))));
        let h = 1e-5;
        let mut idx = 0;
        let mut probe = m.clone();
        let mut names = Vec::new();
        probe.params().visit(|name, t| names.push((name.to_string(), t.len())));
        for (name, len) in names {
            for k in 0..len {
                let shift = |mm: &mut CaptionModel, delta: f64| {
                    mm.params_mut().visit_mut(|n2, t| {
                        if n2 == name {
                            t[k] += delta;
                        }
                    })
                };
                shift(&mut probe, h);
                let up = batch_loss(&probe, &data).unwrap();
                shift(&mut probe, -2.0 * h);
                let down = batch_loss(&probe, &data).unwrap();
                shift(&mut probe, h);
                let numeric = (up - down) / (2.0 * h);
                let analytic = flat[idx].1;
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{k}]: {analytic} vs {numeric}");
                idx += 1;
            }
        }
        assert_eq!(idx, flat.len());
    }

    #[test]
    fn duplicating_a_sequence_keeps_the_mean() {
        let m = model(5, 3, 3, 2, 21);
        let one = batch(5, 2, 22)[..1].to_vec();
        let two = vec![one[0].clone(), one[0].clone()];
        let (l1, g1) = gradients(&m, &one).unwrap();
        let (l2, g2) = gradients(&m, &two).unwrap();
        assert!((l1 - l2).abs() <= 1e-12);
        let mut a = Vec::new();
        g1.visit(|_, t| a.extend_from_slice(t));
        let mut i = 0;
        g2.visit(|_, t| {
            for v in t {
                assert!((v - a[i]).abs() <= 1e-12);
                i += 1;
            }
        });
    }

    #[test]
    fn batch_errors() {
        let m = model(5, 3, 2, 1, 1);
        assert!(gradients(&m, &[]).is_err());
        assert!(gradients(&m, &[TrainingExample::new(vec![0.0], vec![])]).is_err());
        assert!(gradients(&m, &[TrainingExample::new(vec![0.0], vec![9])]).is_err());
        assert!(gradients(&m, &[TrainingExample::new(vec![0.0, 1.0], vec![0])]).is_err());
    }
}
