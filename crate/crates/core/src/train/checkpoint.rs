//! Binary checkpoints.
//!
//! ```text
//! magic    8 bytes   "NTMCKPT\0"
//! version  u32 LE
//! hlen     u64 LE    length of the JSON header
//! header   hlen bytes (UTF-8 JSON: model config, epoch, optimiser
//!                      settings, and name/group/shape/update count of
//!                      every parameter in order)
//! payload  f64 LE    every parameter value, then every first moment,
//!                    then every second moment, row-major, header order
//! ```
//!
//! The file must end exactly after the payload.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig, Moments};
use super::TrainState;
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::model::{ModelConfig, NeuralTopicModel, ParamGroup, ParamSet};

pub const MAGIC: &[u8; 8] = b"NTMCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    group: String,
    rows: usize,
    cols: usize,
    updates: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    construction: String,
    decoder: String,
    vocab_size: usize,
    topics: usize,
    active_topics: usize,
    latent: usize,
    mlp_hidden: usize,
    dropout_keep: f64,
    epoch: u64,
    adam_step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    params: Vec<ParamEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: NeuralTopicModel,
    pub state: TrainState,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut out: W, model: &NeuralTopicModel, state: &TrainState) -> std::io::Result<()> {
    let c = model.config();
    let header = Header {
        construction: c.construction.to_string(),
        decoder: c.decoder.to_string(),
        vocab_size: c.vocab_size,
        topics: c.topics,
        active_topics: model.active_topics(),
        latent: c.latent,
        mlp_hidden: c.mlp_hidden,
        dropout_keep: c.dropout_keep,
        epoch: state.epoch,
        adam_step: state.adam.step,
        beta1: state.adam.config.beta1,
        beta2: state.adam.config.beta2,
        eps: state.adam.config.eps,
        params: model
            .params()
            .iter()
            .zip(&state.adam.slots)
            .map(|(p, s)| ParamEntry {
                name: p.name.clone(),
                group: p.group.as_str().to_string(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                updates: s.t,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let tensors = model
        .params()
        .iter()
        .map(|p| &p.value)
        .chain(state.adam.slots.iter().map(|s| &s.m))
        .chain(state.adam.slots.iter().map(|s| &s.v));
    for t in tensors {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| bad(format!("file truncated in {what}")))
}

fn read_tensor<R: Read>(r: &mut R, rows: usize, cols: usize, what: &str) -> Result<Tensor> {
    let mut bytes = vec![0u8; rows * cols * 8];
    read_exact(r, &mut bytes, what)?;
    let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Tensor::matrix(rows, cols, data))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut word = [0u8; 4];
    read_exact(&mut r, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version} (expected {VERSION})")));
    }
    let mut len = [0u8; 8];
    read_exact(&mut r, &mut len, "header length")?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(bad(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    read_exact(&mut r, &mut json, "header")?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("malformed header: {e}")))?;

    let config = ModelConfig {
        construction: h.construction.parse()?,
        decoder: h.decoder.parse()?,
        vocab_size: h.vocab_size,
        topics: h.topics,
        latent: h.latent,
        mlp_hidden: h.mlp_hidden,
        dropout_keep: h.dropout_keep,
    };
    config.validate().map_err(|e| bad(format!("invalid model config: {e}")))?;

    let mut params = ParamSet::new();
    for e in &h.params {
        let group = match e.group.as_str() {
            "generative" => ParamGroup::Generative,
            "variational" => ParamGroup::Variational,
            g => return Err(bad(format!("unknown parameter group {g:?}"))),
        };
        if e.rows == 0 || e.cols == 0 {
            return Err(bad(format!("parameter {} has an empty shape", e.name)));
        }
        params.add(e.name.clone(), group, read_tensor(&mut r, e.rows, e.cols, &e.name)?);
    }
    let mut firsts = Vec::with_capacity(h.params.len());
    for e in &h.params {
        firsts.push(read_tensor(&mut r, e.rows, e.cols, "first moments")?);
    }
    let mut slots = Vec::with_capacity(h.params.len());
    for (e, m) in h.params.iter().zip(firsts) {
        let v = read_tensor(&mut r, e.rows, e.cols, "second moments")?;
        slots.push(Moments { m, v, t: e.updates });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after payload"));
    }

    let model = NeuralTopicModel::from_params(config, h.active_topics, params)?;
    let adam = Adam {
        config: AdamConfig {
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
        },
        slots,
        step: h.adam_step,
    };
    Ok(Checkpoint {
        model,
        state: TrainState { adam, epoch: h.epoch },
    })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(model: &NeuralTopicModel, state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_checkpoint(BufWriter::new(file), model, state).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::ConstructionKind;
    use crate::model::DecoderMode;

    fn model(kind: ConstructionKind) -> NeuralTopicModel {
        let mut c = ModelConfig::new(kind, 7, 3);
        c.latent = 4;
        c.mlp_hidden = 5;
        c.decoder = DecoderMode::Softmax;
        NeuralTopicModel::new(c, 3).unwrap()
    }

    fn bytes(m: &NeuralTopicModel, s: &TrainState) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, m, s).unwrap();
        out
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in ConstructionKind::ALL {
            let mut m = model(kind);
            let mut s = TrainState::new(&m);
            let grads: Vec<_> = m.params().iter().map(|p| Some(p.value.map(|v| v.sin() + 0.1))).collect();
            s.adam.step(m.params_mut(), &grads, 0.01).unwrap();
            s.epoch = 4;
            if kind.is_unbounded() {
                m.add_topic().unwrap();
            }
            let raw = bytes(&m, &s);
            let back = read_checkpoint(raw.as_slice()).unwrap();
            assert_eq!(back.model.params(), m.params());
            assert_eq!(back.model.config(), m.config());
            assert_eq!(back.model.active_topics(), m.active_topics());
            assert_eq!(back.state, s);
            assert_eq!(bytes(&back.model, &back.state), raw);
        }
    }

    #[test]
    fn truncated_and_padded_files_are_refused() {
        let m = model(ConstructionKind::Gsb);
        let raw = bytes(&m, &TrainState::new(&m));
        for cut in [0, 5, 12, 40, raw.len() - 1] {
            assert!(matches!(read_checkpoint(&raw[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut long = raw.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
        let mut wrong = raw.clone();
        wrong[8] = 9;
        assert!(read_checkpoint(wrong.as_slice()).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn save_and_load_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model(ConstructionKind::Rsb);
        let s = TrainState::new(&m);
        save_checkpoint(&m, &s, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model.params(), m.params());
        assert!(matches!(load_checkpoint(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
