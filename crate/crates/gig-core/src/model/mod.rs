//! From-scratch encoder-decoder sequence model: vocabulary, literal
//! tokenization of rule instances, a reverse-mode tape, the attention
//! network, training, beam-search decoding, and binary checkpoints.

pub mod autodiff;
pub mod beam;
pub mod checkpoint;
pub mod pairs;
pub mod train;
pub mod transformer;
pub mod vocab;

pub use beam::{predict_topk, Prediction};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use pairs::{make_training_pairs, TrainingPair};
pub use train::{grad_check, kl_loss, train};
pub use transformer::{ModelParams, Transformer};
pub use vocab::{build_vocab, TokenKind, Vocabulary, BOS, EOS, PAD, SEP, UNK};
