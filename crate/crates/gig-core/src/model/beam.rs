//! Beam-search decoding with length-normalized log-probability scores
//! and value-group extraction from the decoded literal layout.

use crate::error::Result;
use crate::model::checkpoint::Checkpoint;
use crate::model::vocab::{TokenKind, BOS, EOS, PAD, SEP, UNK};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Decoded ids between BOS and EOS (exclusive).
    pub token_ids: Vec<usize>,
    /// Value words per `<sep>` group, space-joined; structural tokens
    /// are dropped.
    pub groups: Vec<String>,
    /// Sum of token log-probabilities divided by generated length.
    pub score: f64,
    /// The encoder input contained UNK (out-of-vocabulary content).
    pub unk_input: bool,
    /// The decoded sequence contains UNK.
    pub unk_output: bool,
}

#[derive(Clone)]
struct Beam {
    seq: Vec<usize>,
    log_prob: f64,
    finished: bool,
}

impl Beam {
    /// Length-normalized score; BOS does not count as generated.
    fn score(&self) -> f64 {
        let generated = (self.seq.len() - 1).max(1);
        self.log_prob / generated as f64
    }
}

/// Top-k beam search. Deterministic: ties break on the token sequence.
pub fn predict_topk(ckpt: &Checkpoint, enc: &[usize], k: usize) -> Result<Vec<Prediction>> {
    assert!(k >= 1, "beam width must be positive");
    let model = ckpt.model();
    let unk_input = enc.iter().any(|&id| id == UNK);
    let max_len = ckpt.params.max_seq_len;

    let mut beams = vec![Beam { seq: vec![BOS], log_prob: 0.0, finished: false }];
    while beams.iter().any(|b| !b.finished) {
        let mut next: Vec<Beam> = Vec::new();
        for beam in &beams {
            if beam.finished {
                next.push(beam.clone());
                continue;
            }
            if beam.seq.len() >= max_len {
                let mut b = beam.clone();
                b.finished = true;
                next.push(b);
                continue;
            }
            let probs = model.forward_probs(enc, &beam.seq)?;
            let last = probs.row(probs.nrows() - 1);
            for (token, &p) in last.iter().enumerate() {
                // PAD and BOS never appear inside generated content.
                if token == PAD || token == BOS {
                    continue;
                }
                let mut seq = beam.seq.clone();
                seq.push(token);
                next.push(Beam {
                    seq,
                    log_prob: beam.log_prob + p.max(1e-300).ln(),
                    finished: token == EOS,
                });
            }
        }
        next.sort_by(|a, b| {
            b.score()
                .total_cmp(&a.score())
                .then_with(|| a.seq.cmp(&b.seq))
        });
        next.truncate(k);
        beams = next;
    }

    beams
        .into_iter()
        .map(|beam| {
            let content: Vec<usize> = beam.seq[1..]
                .iter()
                .copied()
                .take_while(|&t| t != EOS)
                .collect();
            let (groups, unk_output) = extract_groups(ckpt, &content)?;
            Ok(Prediction {
                token_ids: content,
                groups,
                score: beam.score(),
                unk_input,
                unk_output,
            })
        })
        .collect()
}

/// Value words per SEP group; structural tokens are skipped, UNK is
/// kept (rendered) and flagged.
fn extract_groups(ckpt: &Checkpoint, content: &[usize]) -> Result<(Vec<String>, bool)> {
    let mut groups: Vec<Vec<String>> = vec![Vec::new()];
    let mut unk = false;
    for &id in content {
        if id == SEP {
            groups.push(Vec::new());
            continue;
        }
        match ckpt.vocab.kind(id)? {
            TokenKind::Value => groups.last_mut().unwrap().push(ckpt.vocab.token(id)?.to_string()),
            TokenKind::Special if id == UNK => {
                unk = true;
                groups.last_mut().unwrap().push(ckpt.vocab.token(id)?.to_string());
            }
            _ => {}
        }
    }
    Ok((groups.into_iter().map(|g| g.join(" ")).collect(), unk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pairs::TrainingPair;
    use crate::model::train::train;
    use crate::model::transformer::ModelParams;
    use crate::model::vocab::Vocabulary;
    use std::collections::BTreeSet;

    fn toy_checkpoint() -> (Checkpoint, Vocabulary) {
        let structural: BTreeSet<String> =
            ["x.A", "y.B", "=0"].iter().map(|s| s.to_string()).collect();
        let values: BTreeSet<String> = ["red", "blue", "left", "right"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let vocab = Vocabulary::new(structural, values);
        let params = ModelParams {
            embed_dim: 16,
            num_heads: 2,
            num_layers: 1,
            feedforward_dim: 32,
            max_seq_len: 16,
            dropout_rate: 0.0,
            label_smoothing: 0.0,
            learning_rate: 5e-3,
            batch_size: 8,
            epochs: 60,
            seed: 7,
        };
        let make = |input: &str, output: &str| TrainingPair {
            enc: vec![vocab.id("x.A"), vocab.id("=0"), vocab.id(input)],
            dec: vec![BOS, vocab.id("y.B"), vocab.id("=0"), vocab.id(output), EOS],
            rule: "r1".into(),
            match_id: 0,
        };
        let pairs: Vec<TrainingPair> = (0..20)
            .flat_map(|_| [make("red", "left"), make("blue", "right")])
            .collect();
        let ckpt = train(&pairs, &vocab, &params).unwrap();
        (ckpt, vocab)
    }

    #[test]
    fn memorized_pairs_decode_exactly() {
        let (ckpt, vocab) = toy_checkpoint();
        let enc = vec![vocab.id("x.A"), vocab.id("=0"), vocab.id("red")];
        let top = predict_topk(&ckpt, &enc, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].groups, vec!["left".to_string()]);
        assert!(!top[0].unk_input);
        assert!(!top[0].unk_output);
        assert!(top[0].score <= 0.0);

        let enc = vec![vocab.id("x.A"), vocab.id("=0"), vocab.id("blue")];
        let top = predict_topk(&ckpt, &enc, 3).unwrap();
        assert_eq!(top[0].groups, vec!["right".to_string()]);
        assert!(top.len() <= 3);
        // Best first.
        for w in top.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn unknown_input_token_sets_the_flag() {
        let (ckpt, vocab) = toy_checkpoint();
        let enc = vec![vocab.id("x.A"), vocab.id("=0"), vocab.id("never-seen")];
        let top = predict_topk(&ckpt, &enc, 1).unwrap();
        assert!(top[0].unk_input);
    }

    #[test]
    fn beam_search_is_deterministic() {
        let (ckpt, vocab) = toy_checkpoint();
        let enc = vec![vocab.id("x.A"), vocab.id("=0"), vocab.id("red")];
        let a = predict_topk(&ckpt, &enc, 2).unwrap();
        let b = predict_topk(&ckpt, &enc, 2).unwrap();
        assert_eq!(a, b);
    }
}
