//! Trained-model persistence: magic `FLCK`, a version word, a JSON
//! header (architecture, target modes, seed, step count), then
//! length-prefixed named tensors as little-endian 64-bit floats.
//! Round-tripping a checkpoint reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::encoders::{Encoder, EncoderConfig, ParamMap, TargetEncoder, TargetMode, TargetSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to evaluate (or exactly re-describe) a training run:
/// the trained encoder, the frozen targets it was trained against, and
/// the run provenance. RNG streams are derived from `seed` and a step
/// counter, so those two fields are the complete RNG state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub encoder: Encoder,
    pub targets: TargetSet,
    pub seed: u64,
    pub step_count: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    target_mode: TargetMode,
    with_numeric: bool,
    seed: u64,
    step_count: u64,
    /// Adam moments are not saved (runs always train start-to-finish);
    /// the slot exists so a resume feature would not bump the version.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    optimizer_steps: Option<u64>,
}

fn push_tensor(out: &mut Vec<u8>, prefix: &str, name: &str, tensor: &Tensor) {
    let full = format!("{prefix}/{name}");
    out.extend_from_slice(&(full.len() as u64).to_le_bytes());
    out.extend_from_slice(full.as_bytes());
    let (rows, cols) = tensor.matrix_dims().expect("parameters are matrices");
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    tensor.with_data(|data| {
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
}

/// Serialize to the `FLCK` byte format.
pub fn encode_checkpoint(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    let header = Header {
        config: checkpoint.encoder.config().clone(),
        target_mode: checkpoint.targets.text.mode(),
        with_numeric: checkpoint.targets.numeric.is_some(),
        seed: checkpoint.seed,
        step_count: checkpoint.step_count,
        optimizer_steps: None,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::format("checkpoint header", e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(header_json.as_bytes());

    let numeric_params =
        checkpoint.targets.numeric.as_ref().map(|n| n.params()).into_iter();
    let sections = [("encoder", checkpoint.encoder.params()), ("text", checkpoint.targets.text.params())]
        .into_iter()
        .chain(numeric_params.map(|p| ("numeric", p)));
    let mut count: u64 = 0;
    let mut body = Vec::new();
    for (prefix, params) in sections {
        for (name, tensor) in params.iter() {
            push_tensor(&mut body, prefix, name, tensor);
            count += 1;
        }
    }
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated file"))?;
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decode the `FLCK` byte format back into live model objects.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, offset: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic (not an FLCK file)"));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let header_len = cur.u64()? as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)
        .map_err(|e| Error::format("checkpoint header", e.to_string()))?;

    let count = cur.u64()?;
    let mut encoder_params = ParamMap::new();
    let mut text_params = ParamMap::new();
    let mut numeric_params = ParamMap::new();
    for _ in 0..count {
        let name_len = cur.u64()? as usize;
        let full = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::format("checkpoint", "non-utf8 tensor name"))?;
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let numel = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("checkpoint", format!("tensor {full:?} overflows")))?;
        let raw = cur.take(numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (section, name) = full
            .split_once('/')
            .ok_or_else(|| Error::format("checkpoint", format!("unsectioned tensor {full:?}")))?;
        // Encoder weights stay trainable; target towers are frozen.
        let (params, requires_grad) = match section {
            "encoder" => (&mut encoder_params, true),
            "text" => (&mut text_params, false),
            "numeric" => (&mut numeric_params, false),
            other => {
                return Err(Error::format("checkpoint", format!("unknown section {other:?}")))
            }
        };
        params.insert(name, Tensor::new(&[rows, cols], data, requires_grad)?)?;
    }
    if cur.offset != bytes.len() {
        return Err(Error::format(
            "checkpoint",
            format!("{} trailing bytes after the last tensor", bytes.len() - cur.offset),
        ));
    }

    let config = header.config;
    let embed_dim = config.embed_dim;
    let vocab_size = config.vocab_size;
    let encoder = Encoder::from_parts(config, encoder_params)?;
    let text =
        TargetEncoder::from_parts(header.target_mode, vocab_size, embed_dim, text_params)?;
    let numeric = if header.with_numeric {
        Some(TargetEncoder::from_parts(
            TargetMode::NumericColor,
            vocab_size,
            embed_dim,
            numeric_params,
        )?)
    } else if numeric_params.is_empty() {
        None
    } else {
        return Err(Error::format("checkpoint", "numeric tensors present but not declared"));
    };

    Ok(Checkpoint {
        encoder,
        targets: TargetSet { text, numeric },
        seed: header.seed,
        step_count: header.step_count,
    })
}

/// Write a checkpoint file, creating parent directories as needed.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_checkpoint(checkpoint)?)?;
    Ok(())
}

/// Load a checkpoint file written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

/// FNV-1a over names, shapes, and exact float bits: two maps hash equal
/// iff every tensor matches bit for bit.
pub fn param_hash(params: &ParamMap) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for (name, tensor) in params.iter() {
        for b in name.bytes() {
            eat(b);
        }
        for &d in tensor.shape() {
            for b in (d as u64).to_le_bytes() {
                eat(b);
            }
        }
        tensor.with_data(|data| {
            for &v in data {
                for b in v.to_bits().to_le_bytes() {
                    eat(b);
                }
            }
        });
    }
    hash
}
