//! Encoder-decoder attention network built on the autodiff tape.
//! Post-norm residual layers, fixed sinusoidal positions, shared
//! embedding, separate output projection.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::model::autodiff::{NodeId, Tape};
use crate::model::vocab::PAD;

const NEG_INF: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub embed_dim: usize,
    pub num_heads: usize,
    /// Encoder and decoder stack depth.
    pub num_layers: usize,
    pub feedforward_dim: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
    pub label_smoothing: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            embed_dim: 64,
            num_heads: 2,
            num_layers: 2,
            feedforward_dim: 128,
            max_seq_len: 32,
            dropout_rate: 0.1,
            label_smoothing: 0.1,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 7,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(GigError::Config(
                "embed_dim must be a positive multiple of num_heads".into(),
            ));
        }
        if self.num_layers == 0 || self.feedforward_dim == 0 || self.max_seq_len < 2 {
            return Err(GigError::Config("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(GigError::Config("label_smoothing must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(GigError::Config("dropout_rate must be in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GigError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(GigError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub params: ModelParams,
    pub vocab_size: usize,
    /// Named tensors in a fixed order; the checkpoint and optimizer
    /// state both key off these names.
    pub weights: BTreeMap<String, Array2<f64>>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl Transformer {
    pub fn init(params: ModelParams, vocab_size: usize, rng: &mut ChaCha8Rng) -> Result<Transformer> {
        params.validate()?;
        if vocab_size == 0 {
            return Err(GigError::Model("empty vocabulary".into()));
        }
        let d = params.embed_dim;
        let ff = params.feedforward_dim;
        let mut weights = BTreeMap::new();
        let dense = |weights: &mut BTreeMap<String, Array2<f64>>,
                         rng: &mut ChaCha8Rng,
                         prefix: &str,
                         rows: usize,
                         cols: usize| {
            weights.insert(format!("{prefix}.w"), xavier(rng, rows, cols));
            weights.insert(format!("{prefix}.b"), Array2::zeros((1, cols)));
        };
        let attn = |weights: &mut BTreeMap<String, Array2<f64>>,
                    rng: &mut ChaCha8Rng,
                    prefix: &str| {
            for part in ["q", "k", "v", "o"] {
                weights.insert(format!("{prefix}.w{part}"), xavier(rng, d, d));
                weights.insert(format!("{prefix}.b{part}"), Array2::zeros((1, d)));
            }
        };
        let norm = |weights: &mut BTreeMap<String, Array2<f64>>, prefix: &str| {
            weights.insert(format!("{prefix}.g"), Array2::ones((1, d)));
            weights.insert(format!("{prefix}.b"), Array2::zeros((1, d)));
        };
        weights.insert("embed".to_string(), xavier(rng, vocab_size, d));
        for i in 0..params.num_layers {
            attn(&mut weights, rng, &format!("enc{i}.attn"));
            norm(&mut weights, &format!("enc{i}.ln1"));
            dense(&mut weights, rng, &format!("enc{i}.ff1"), d, ff);
            dense(&mut weights, rng, &format!("enc{i}.ff2"), ff, d);
            norm(&mut weights, &format!("enc{i}.ln2"));
        }
        for i in 0..params.num_layers {
            attn(&mut weights, rng, &format!("dec{i}.self"));
            norm(&mut weights, &format!("dec{i}.ln1"));
            attn(&mut weights, rng, &format!("dec{i}.cross"));
            norm(&mut weights, &format!("dec{i}.ln2"));
            dense(&mut weights, rng, &format!("dec{i}.ff1"), d, ff);
            dense(&mut weights, rng, &format!("dec{i}.ff2"), ff, d);
            norm(&mut weights, &format!("dec{i}.ln3"));
        }
        dense(&mut weights, rng, "out", d, vocab_size);
        Ok(Transformer { params, vocab_size, weights })
    }

    /// Sinusoidal position matrix for a sequence length.
    fn positions(&self, len: usize) -> Array2<f64> {
        let d = self.params.embed_dim;
        Array2::from_shape_fn((len, d), |(pos, j)| {
            let angle = pos as f64 / 10000f64.powf((2 * (j / 2)) as f64 / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
    }

    fn check_sequence(&self, ids: &[usize], side: &str) -> Result<()> {
        if ids.is_empty() {
            return Err(GigError::Model(format!("{side} sequence is empty")));
        }
        if ids.len() > self.params.max_seq_len {
            return Err(GigError::Model(format!(
                "{side} sequence length {} exceeds max_seq_len {}",
                ids.len(),
                self.params.max_seq_len
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(GigError::Model(format!("token id {id} out of range")));
        }
        Ok(())
    }

    /// Full forward graph; logits are one row per decoder position.
    pub fn forward_pass(
        &self,
        enc_ids: &[usize],
        dec_ids: &[usize],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardPass> {
        self.check_sequence(enc_ids, "encoder")?;
        self.check_sequence(dec_ids, "decoder")?;
        let mut b = Builder {
            tape: Tape::new(),
            weights: &self.weights,
            leaves: BTreeMap::new(),
        };
        let d = self.params.embed_dim;
        let heads = self.params.num_heads;
        let scale = (d as f64).sqrt();

        let enc_pad = pad_mask_cols(enc_ids);
        let dec_pad = pad_mask_cols(dec_ids);

        let mut drop = |b: &mut Builder, x: NodeId| -> NodeId {
            let rate = self.params.dropout_rate;
            match (&mut dropout, rate > 0.0) {
                (Some(rng), true) => {
                    let dim = b.tape.value(x).dim();
                    let keep = 1.0 - rate;
                    let mask = Array2::from_shape_fn(dim, |_| {
                        if rng.random_range(0.0..1.0) < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    b.tape.mul_const(x, mask)
                }
                _ => x,
            }
        };

        let embed = |b: &mut Builder, ids: &[usize]| -> Result<NodeId> {
            let table = b.weight("embed");
            let gathered = b.tape.gather(table, ids)?;
            let scaled = b.tape.scale(gathered, scale);
            Ok(b.tape.add_const(scaled, &self.positions(ids.len())))
        };

        let mut enc_x = embed(&mut b, enc_ids)?;
        enc_x = drop(&mut b, enc_x);
        let enc_mask = mask_matrix(enc_ids.len(), &enc_pad, None);
        for i in 0..self.params.num_layers {
            let a = b.attention(&format!("enc{i}.attn"), enc_x, enc_x, &enc_mask, heads);
            let a = drop(&mut b, a);
            enc_x = b.residual_norm(&format!("enc{i}.ln1"), enc_x, a);
            let f = b.feed_forward(&format!("enc{i}"), enc_x);
            let f = drop(&mut b, f);
            enc_x = b.residual_norm(&format!("enc{i}.ln2"), enc_x, f);
        }

        let mut dec_x = embed(&mut b, dec_ids)?;
        dec_x = drop(&mut b, dec_x);
        let causal = mask_matrix(dec_ids.len(), &dec_pad, Some(dec_ids.len()));
        let cross = cross_mask(dec_ids.len(), &enc_pad);
        for i in 0..self.params.num_layers {
            let a = b.attention(&format!("dec{i}.self"), dec_x, dec_x, &causal, heads);
            let a = drop(&mut b, a);
            dec_x = b.residual_norm(&format!("dec{i}.ln1"), dec_x, a);
            let c = b.attention(&format!("dec{i}.cross"), dec_x, enc_x, &cross, heads);
            let c = drop(&mut b, c);
            dec_x = b.residual_norm(&format!("dec{i}.ln2"), dec_x, c);
            let f = b.feed_forward(&format!("dec{i}"), dec_x);
            let f = drop(&mut b, f);
            dec_x = b.residual_norm(&format!("dec{i}.ln3"), dec_x, f);
        }

        let logits = b.dense("out", dec_x);
        Ok(ForwardPass {
            tape: b.tape,
            logits,
            leaves: b.leaves,
        })
    }

    /// Per-position probability distributions over the vocabulary.
    pub fn forward_probs(&self, enc_ids: &[usize], dec_ids: &[usize]) -> Result<Array2<f64>> {
        let mut pass = self.forward_pass(enc_ids, dec_ids, None)?;
        let probs = pass.tape.softmax_rows(pass.logits);
        Ok(pass.tape.value(probs).clone())
    }

    /// Teacher-forced loss and per-weight gradients on one pair.
    /// `dec` must be BOS-prefixed and EOS-terminated.
    pub fn loss_and_grads(
        &self,
        enc_ids: &[usize],
        dec_ids: &[usize],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, BTreeMap<String, Array2<f64>>)> {
        if dec_ids.len() < 2 {
            return Err(GigError::Model("decoder sequence needs BOS and EOS".into()));
        }
        let dec_in = &dec_ids[..dec_ids.len() - 1];
        let targets = &dec_ids[1..];
        let pass = self.forward_pass(enc_ids, dec_in, dropout)?;
        let (target_dist, scored) = self.smoothed_targets(targets);
        let mut tape = pass.tape;
        let loss_node = tape.kl_loss(pass.logits, target_dist, scored);
        let loss = tape.value(loss_node)[(0, 0)];
        let node_grads = tape.backward(loss_node);
        let grads = pass
            .leaves
            .into_iter()
            .map(|(name, node)| (name, node_grads[node].clone()))
            .collect();
        Ok((loss, grads))
    }

    /// Teacher-forced loss only (no dropout, no gradients).
    pub fn loss(&self, enc_ids: &[usize], dec_ids: &[usize]) -> Result<f64> {
        let dec_in = &dec_ids[..dec_ids.len() - 1];
        let targets = &dec_ids[1..];
        let pass = self.forward_pass(enc_ids, dec_in, None)?;
        let (target_dist, scored) = self.smoothed_targets(targets);
        let mut tape = pass.tape;
        let loss_node = tape.kl_loss(pass.logits, target_dist, scored);
        Ok(tape.value(loss_node)[(0, 0)])
    }

    /// Smoothed one-hot rows: 1 - eps at the target, eps/(|V|-1) elsewhere.
    /// PAD targets are unscored.
    fn smoothed_targets(&self, targets: &[usize]) -> (Array2<f64>, Vec<bool>) {
        let eps = self.params.label_smoothing;
        let v = self.vocab_size;
        let off = if v > 1 { eps / (v - 1) as f64 } else { 0.0 };
        let mut dist = Array2::from_elem((targets.len(), v), off);
        let mut scored = Vec::with_capacity(targets.len());
        for (r, &t) in targets.iter().enumerate() {
            dist[(r, t)] = 1.0 - eps;
            scored.push(t != PAD);
        }
        (dist, scored)
    }
}

pub struct ForwardPass {
    pub tape: Tape,
    pub logits: NodeId,
    /// Weight name to its leaf node, for gradient extraction.
    pub leaves: BTreeMap<String, NodeId>,
}

/// Which key positions are PAD (masked out of attention).
fn pad_mask_cols(ids: &[usize]) -> Vec<bool> {
    ids.iter().map(|&id| id == PAD).collect()
}

/// Additive attention mask: `NEG_INF` on PAD key columns and, when
/// `causal_len` is set, on strictly-future columns.
fn mask_matrix(rows: usize, pad_cols: &[bool], causal_len: Option<usize>) -> Array2<f64> {
    Array2::from_shape_fn((rows, pad_cols.len()), |(i, j)| {
        if pad_cols[j] || causal_len.is_some_and(|_| j > i) {
            NEG_INF
        } else {
            0.0
        }
    })
}

fn cross_mask(rows: usize, enc_pad: &[bool]) -> Array2<f64> {
    mask_matrix(rows, enc_pad, None)
}

struct Builder<'a> {
    tape: Tape,
    weights: &'a BTreeMap<String, Array2<f64>>,
    leaves: BTreeMap<String, NodeId>,
}

impl Builder<'_> {
    fn weight(&mut self, name: &str) -> NodeId {
        if let Some(&node) = self.leaves.get(name) {
            return node;
        }
        let tensor = self.weights.get(name).expect("weight name").clone();
        let node = self.tape.leaf(tensor);
        self.leaves.insert(name.to_string(), node);
        node
    }

    fn dense(&mut self, prefix: &str, x: NodeId) -> NodeId {
        let w = self.weight(&format!("{prefix}.w"));
        let b = self.weight(&format!("{prefix}.b"));
        let h = self.tape.matmul(x, w);
        self.tape.add_row(h, b)
    }

    fn projection(&mut self, prefix: &str, part: &str, x: NodeId) -> NodeId {
        let w = self.weight(&format!("{prefix}.w{part}"));
        let b = self.weight(&format!("{prefix}.b{part}"));
        let h = self.tape.matmul(x, w);
        self.tape.add_row(h, b)
    }

    /// Multi-head scaled dot-product attention with an additive mask.
    fn attention(
        &mut self,
        prefix: &str,
        queries: NodeId,
        keys_values: NodeId,
        mask: &Array2<f64>,
        heads: usize,
    ) -> NodeId {
        let q = self.projection(prefix, "q", queries);
        let k = self.projection(prefix, "k", keys_values);
        let v = self.projection(prefix, "v", keys_values);
        let d = self.tape.value(q).ncols();
        let dh = d / heads;
        let mut outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (start, end) = (h * dh, (h + 1) * dh);
            let qh = self.tape.slice_cols(q, start, end);
            let kh = self.tape.slice_cols(k, start, end);
            let vh = self.tape.slice_cols(v, start, end);
            let kt = self.tape.transpose(kh);
            let scores = self.tape.matmul(qh, kt);
            let scaled = self.tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let masked = self.tape.add_const(scaled, mask);
            let attn = self.tape.softmax_rows(masked);
            outputs.push(self.tape.matmul(attn, vh));
        }
        let joined = self.tape.concat_cols(&outputs);
        self.projection(prefix, "o", joined)
    }

    fn feed_forward(&mut self, layer: &str, x: NodeId) -> NodeId {
        let h = self.dense(&format!("{layer}.ff1"), x);
        let h = self.tape.relu(h);
        self.dense(&format!("{layer}.ff2"), h)
    }

    /// Post-norm residual: LN(x + sublayer).
    fn residual_norm(&mut self, ln: &str, x: NodeId, sublayer: NodeId) -> NodeId {
        let g = self.weight(&format!("{ln}.g"));
        let b = self.weight(&format!("{ln}.b"));
        let sum = self.tape.add(x, sublayer);
        self.tape.layer_norm(sum, g, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_params() -> ModelParams {
        ModelParams {
            embed_dim: 8,
            num_heads: 2,
            num_layers: 1,
            feedforward_dim: 16,
            max_seq_len: 16,
            dropout_rate: 0.0,
            ..ModelParams::default()
        }
    }

    fn tiny_model(vocab_size: usize) -> Transformer {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Transformer::init(tiny_params(), vocab_size, &mut rng).unwrap()
    }

    #[test]
    fn output_rows_are_distributions() {
        let model = tiny_model(9);
        let probs = model.forward_probs(&[5, 6, 7], &[1, 5, 8]).unwrap();
        assert_eq!(probs.dim(), (3, 9));
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn zero_weights_give_uniform_distributions() {
        let mut model = tiny_model(10);
        for tensor in model.weights.values_mut() {
            tensor.fill(0.0);
        }
        let probs = model.forward_probs(&[5, 6], &[1, 7]).unwrap();
        for row in probs.rows() {
            for &p in row {
                assert!((p - 0.1).abs() < 1e-12, "expected uniform, got {p}");
            }
        }
    }

    #[test]
    fn causal_mask_blocks_future_tokens() {
        let model = tiny_model(12);
        let base = model.forward_probs(&[5, 6, 7], &[1, 8, 9, 10]).unwrap();
        let changed = model.forward_probs(&[5, 6, 7], &[1, 8, 11, 10]).unwrap();
        // Positions 0 and 1 precede the edit at position 2.
        for p in 0..2 {
            for j in 0..12 {
                assert!(
                    (base[(p, j)] - changed[(p, j)]).abs() < 1e-12,
                    "position {p} leaked future information"
                );
            }
        }
        // The edited position itself must differ, or the mask test is vacuous.
        let delta: f64 = (0..12).map(|j| (base[(2, j)] - changed[(2, j)]).abs()).sum();
        assert!(delta > 1e-9);
    }

    #[test]
    fn pad_keys_are_ignored() {
        let model = tiny_model(12);
        // PAD-extended encoder input must not change decoder outputs.
        let short = model.forward_probs(&[5, 6], &[1, 8]).unwrap();
        let padded = model.forward_probs(&[5, 6, PAD, PAD], &[1, 8]).unwrap();
        for j in 0..12 {
            assert!((short[(0, j)] - padded[(0, j)]).abs() < 1e-9);
            assert!((short[(1, j)] - padded[(1, j)]).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_token_is_an_error() {
        let model = tiny_model(6);
        assert!(model.forward_probs(&[5, 6], &[1]).is_err());
        assert!(model.forward_probs(&[5], &[99]).is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = tiny_model(9);
        let b = tiny_model(9);
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Transformer::init(tiny_params(), 9, &mut rng).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dropout_changes_training_forward_only() {
        let model = Transformer {
            params: ModelParams { dropout_rate: 0.5, ..tiny_params() },
            ..tiny_model(9)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, _) = model.loss_and_grads(&[5, 6], &[1, 7, 2], Some(&mut rng)).unwrap();
        let (b, _) = model.loss_and_grads(&[5, 6], &[1, 7, 2], Some(&mut rng)).unwrap();
        assert_ne!(a, b);
        let c = model.loss(&[5, 6], &[1, 7, 2]).unwrap();
        let d = model.loss(&[5, 6], &[1, 7, 2]).unwrap();
        assert_eq!(c, d);
    }
}
