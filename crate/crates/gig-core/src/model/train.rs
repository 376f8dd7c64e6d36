//! Mini-batch training with teacher forcing and Adam, learning-rate
//! halving with weight restore on plateau (so the recorded loss history
//! never increases), plus a finite-difference gradient checker.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GigError, Result};
use crate::model::checkpoint::Checkpoint;
use crate::model::pairs::TrainingPair;
use crate::model::transformer::{ModelParams, Transformer};
use crate::model::vocab::{Vocabulary, PAD};

const PROB_FLOOR: f64 = 1e-12;

/// Mean over non-PAD positions of KL(smoothed one-hot || pred).
/// `pred` rows are probability distributions aligned with `targets`.
pub fn kl_loss(pred: &Array2<f64>, targets: &[usize], eps: f64) -> f64 {
    let v = pred.ncols();
    let off = if v > 1 { eps / (v - 1) as f64 } else { 0.0 };
    let mut total = 0.0;
    let mut scored = 0usize;
    for (r, &t) in targets.iter().enumerate() {
        if t == PAD {
            continue;
        }
        scored += 1;
        for j in 0..v {
            let target_p = if j == t { 1.0 - eps } else { off };
            if target_p > 0.0 {
                let p = pred[(r, j)].max(PROB_FLOOR);
                total += target_p * (target_p.ln() - p.ln());
            }
        }
    }
    total / scored.max(1) as f64
}

struct Adam {
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(weights: &BTreeMap<String, Array2<f64>>) -> Adam {
        let zeros = |w: &BTreeMap<String, Array2<f64>>| {
            w.iter()
                .map(|(name, tensor)| (name.clone(), Array2::zeros(tensor.dim())))
                .collect()
        };
        Adam { m: zeros(weights), v: zeros(weights), t: 0 }
    }

    fn step(
        &mut self,
        weights: &mut BTreeMap<String, Array2<f64>>,
        grads: &BTreeMap<String, Array2<f64>>,
        lr: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for (name, g) in grads {
            let w = weights.get_mut(name).expect("weight name");
            let m = self.m.get_mut(name).expect("adam state");
            let v = self.v.get_mut(name).expect("adam state");
            azip_update(w, m, v, g, lr, bc1, bc2);
        }
    }
}

fn azip_update(
    w: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, g| {
        *m = Adam::BETA1 * *m + (1.0 - Adam::BETA1) * g;
        *v = Adam::BETA2 * *v + (1.0 - Adam::BETA2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *w -= lr * mhat / (vhat.sqrt() + Adam::EPS);
    });
}

fn corpus_loss(model: &Transformer, pairs: &[TrainingPair]) -> Result<f64> {
    let mut total = 0.0;
    for pair in pairs {
        total += model.loss(&pair.enc, &pair.dec)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Train a fresh model on the pairs. Deterministic for a fixed
/// (pairs, vocab, params) triple; the per-epoch history is strictly
/// non-increasing because an epoch that raises the evaluation loss is
/// rolled back and the learning rate halved.
pub fn train(pairs: &[TrainingPair], vocab: &Vocabulary, params: &ModelParams) -> Result<Checkpoint> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(GigError::Model("no training pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut model = Transformer::init(params.clone(), vocab.len(), &mut rng)?;
    let mut adam = Adam::new(&model.weights);
    let mut lr = params.learning_rate;
    let mut loss_history = Vec::with_capacity(params.epochs);
    let mut lr_history = Vec::with_capacity(params.epochs);

    let initial = corpus_loss(&model, pairs)?;
    if !initial.is_finite() {
        return Err(GigError::Diverged { epoch: 0 });
    }
    let mut best = initial;
    let mut best_weights = model.weights.clone();

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let mut summed: Option<BTreeMap<String, Array2<f64>>> = None;
            for &i in batch {
                let pair = &pairs[i];
                let dropout = (params.dropout_rate > 0.0).then_some(&mut rng);
                let (loss, grads) = model.loss_and_grads(&pair.enc, &pair.dec, dropout)?;
                if !loss.is_finite() {
                    return Err(GigError::Diverged { epoch });
                }
                match &mut summed {
                    None => summed = Some(grads),
                    Some(acc) => {
                        for (name, g) in grads {
                            *acc.get_mut(&name).expect("weight name") += &g;
                        }
                    }
                }
            }
            let mut grads = summed.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for g in grads.values_mut() {
                g.mapv_inplace(|v| v * scale);
            }
            adam.step(&mut model.weights, &grads, lr);
        }
        let loss = corpus_loss(&model, pairs)?;
        if !loss.is_finite() {
            return Err(GigError::Diverged { epoch });
        }
        if loss > best {
            // Roll the epoch back and decay; the history records the
            // retained (best) loss.
            model.weights = best_weights.clone();
            lr *= 0.5;
        } else {
            best = loss;
            best_weights = model.weights.clone();
        }
        loss_history.push(best);
        lr_history.push(lr);
    }

    if params.epochs > 0 {
        let final_loss = *loss_history.last().expect("non-empty history");
        if final_loss >= initial {
            return Err(GigError::Model(format!(
                "training failed to reduce the loss ({initial:.6} -> {final_loss:.6})"
            )));
        }
    }
    model.weights = best_weights;
    Ok(Checkpoint {
        params: params.clone(),
        vocab: vocab.clone(),
        weights: model.weights,
        loss_history,
        lr_history,
    })
}

/// Compare analytic gradients on one pair against central finite
/// differences over at least `min_samples` weight coordinates; returns
/// the maximum relative error. Run with dropout disabled.
pub fn grad_check(
    model: &Transformer,
    pair: &TrainingPair,
    step: f64,
    min_samples: usize,
) -> Result<f64> {
    let (_, analytic) = model.loss_and_grads(&pair.enc, &pair.dec, None)?;
    let mut coords: Vec<(String, usize, usize)> = Vec::new();
    for (name, tensor) in &model.weights {
        for i in 0..tensor.nrows() {
            for j in 0..tensor.ncols() {
                coords.push((name.clone(), i, j));
            }
        }
    }
    let sampled: Vec<(String, usize, usize)> = if coords.len() <= min_samples {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picks = rand::seq::index::sample(&mut rng, coords.len(), min_samples);
        picks.into_iter().map(|i| coords[i].clone()).collect()
    };

    let mut max_err: f64 = 0.0;
    let mut probe = model.clone();
    for (name, i, j) in sampled {
        let original = probe.weights[&name][(i, j)];
        probe.weights.get_mut(&name).unwrap()[(i, j)] = original + step;
        let plus = probe.loss(&pair.enc, &pair.dec)?;
        probe.weights.get_mut(&name).unwrap()[(i, j)] = original - step;
        let minus = probe.loss(&pair.enc, &pair.dec)?;
        probe.weights.get_mut(&name).unwrap()[(i, j)] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[&name][(i, j)];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
