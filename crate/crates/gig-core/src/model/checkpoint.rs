//! Binary checkpoint: magic "GIGM", version, JSON header with the
//! hyperparameters, vocabulary and loss history, then named f64
//! little-endian tensors. Round trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GigError, Result};
use crate::model::transformer::{ModelParams, Transformer};
use crate::model::vocab::Vocabulary;

const MAGIC: &[u8; 4] = b"GIGM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub weights: BTreeMap<String, Array2<f64>>,
    /// Retained evaluation loss per epoch (non-increasing).
    pub loss_history: Vec<f64>,
    /// Learning rate in effect after each epoch.
    pub lr_history: Vec<f64>,
}

impl Checkpoint {
    /// Inference view over the stored weights.
    pub fn model(&self) -> Transformer {
        Transformer {
            params: self.params.clone(),
            vocab_size: self.vocab.len(),
            weights: self.weights.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    params: ModelParams,
    vocab: Vocabulary,
    loss_history: Vec<f64>,
    lr_history: Vec<f64>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header {
        params: ckpt.params.clone(),
        vocab: ckpt.vocab.clone(),
        loss_history: ckpt.loss_history.clone(),
        lr_history: ckpt.lr_history.clone(),
    })?;
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(ckpt.weights.len() as u64).to_le_bytes());
    for (name, tensor) in &ckpt.weights {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(tensor.ncols() as u64).to_le_bytes());
        for &v in tensor.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| GigError::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader { inner: std::io::BufReader::new(file) };
    if r.bytes(4)? != MAGIC {
        return Err(GigError::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(GigError::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let header_len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(&r.bytes(header_len)?)
        .map_err(|e| GigError::Checkpoint(format!("bad header: {e}")))?;
    let mut vocab = header.vocab;
    vocab.reindex();
    let count = r.u64()? as usize;
    let mut weights = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|e| GigError::Checkpoint(format!("bad tensor name: {e}")))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let raw = r.bytes(rows.saturating_mul(cols).saturating_mul(8))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| GigError::Checkpoint(format!("bad tensor shape: {e}")))?;
        weights.insert(name, tensor);
    }
    Ok(Checkpoint {
        params: header.params,
        vocab,
        weights,
        loss_history: header.loss_history,
        lr_history: header.lr_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vocab::{BOS, EOS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn sample_checkpoint() -> Checkpoint {
        let structural: BTreeSet<String> = ["x.A", "=0"].iter().map(|s| s.to_string()).collect();
        let values: BTreeSet<String> = ["red", "left"].iter().map(|s| s.to_string()).collect();
        let vocab = Vocabulary::new(structural, values);
        let params = ModelParams {
            embed_dim: 8,
            num_heads: 2,
            num_layers: 1,
            feedforward_dim: 16,
            max_seq_len: 16,
            ..ModelParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Transformer::init(params.clone(), vocab.len(), &mut rng).unwrap();
        Checkpoint {
            params,
            vocab,
            weights: model.weights,
            loss_history: vec![1.5, 0.9, 0.4],
            lr_history: vec![1e-3, 1e-3, 5e-4],
        }
    }

    #[test]
    fn round_trip_is_bit_exact_and_predictions_agree() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, loaded);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = ckpt.vocab.len();
        for _ in 0..10 {
            let enc: Vec<usize> = (0..3).map(|_| rng.random_range(5..v)).collect();
            let mut dec = vec![BOS, rng.random_range(5..v), EOS];
            dec.truncate(3);
            let a = ckpt.model().forward_probs(&enc, &dec).unwrap();
            let b = loaded.model().forward_probs(&enc, &dec).unwrap();
            assert_eq!(a, b);
        }
        // Saving the loaded copy reproduces identical bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_checkpoint(&cut).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn wrong_magic_and_version_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(load_checkpoint(&path).is_err());

        let ckpt = sample_checkpoint();
        let good = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &good).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes[4] = 99; // bump the version field
        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, &bytes).unwrap();
        let err = load_checkpoint(&bad).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
