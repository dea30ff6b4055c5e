//! Binary checkpoint format.
//!
//! Layout: magic `USCK`, u32 format version, u64 header length, a JSON
//! header (model config, variant, ratio pairs, normalization stats, training
//! summary, thresholds), then each named weight tensor as
//! `u32 name_len, name, u32 ndim, u32 dims…, f32 little-endian row-major
//! data`. Weights are stored at f32; computation upcasts to f64 on load.
//! Save→load→save reproduces identical bytes, and the loader rejects any
//! shape or config mismatch before returning.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::engine::EngineMode;
use crate::error::{Error, Result};
use crate::features::{NormStats, RatioPairSet};
use crate::model::{ModelConfig, ModelWeights};
use crate::train::TrainConfig;

const MAGIC: &[u8; 4] = b"USCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub variant: EngineMode,
    pub ratio_pairs: RatioPairSet,
    pub ratio_eps: f64,
    pub norm: NormStats,
    pub train: TrainConfig,
    pub decode_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub weights: ModelWeights,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                self.header.format_version
            )));
        }
        self.header.model.validate()?;
        self.header.norm.validate()?;
        self.header.train.validate()?;
        self.weights.validate_shapes(&self.header.model)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header_json = serde_json::to_vec(&self.header)
            .map_err(|e| Error::Checkpoint(format!("header serialization: {e}")))?;
        let tensors = self.weights.tensors();

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_json);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for dim in &shape {
                out.extend_from_slice(&(*dim as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut cur, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = read_u32(&mut cur)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = read_u64(&mut cur)? as usize;
        let mut header_json = vec![0u8; header_len];
        read_exact(&mut cur, &mut header_json)?;
        let header: CheckpointHeader = serde_json::from_slice(&header_json)
            .map_err(|e| Error::Checkpoint(format!("header parse: {e}")))?;
        header.model.validate()?;

        let tensor_count = read_u32(&mut cur)? as usize;
        let mut weights = ModelWeights::zeros(&header.model);
        let expected: Vec<(String, Vec<usize>)> = weights
            .tensors()
            .iter()
            .map(|(n, s, _)| (n.to_string(), s.clone()))
            .collect();
        if tensor_count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for this config, file has {tensor_count}",
                expected.len()
            )));
        }
        for (want_name, want_shape) in &expected {
            let name_len = read_u32(&mut cur)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            read_exact(&mut cur, &mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            if &name != want_name {
                return Err(Error::Checkpoint(format!(
                    "tensor order mismatch: expected '{want_name}', found '{name}'"
                )));
            }
            let ndim = read_u32(&mut cur)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(&mut cur)? as usize);
            }
            if &shape != want_shape {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}': shape {shape:?} does not match config {want_shape:?}"
                )));
            }
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let mut b = [0u8; 4];
                read_exact(&mut cur, &mut b)?;
                data.push(f32::from_le_bytes(b) as f64);
            }
            assign_tensor(&mut weights, &name, &shape, data)?;
        }
        if cur.position() != bytes.len() as u64 {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() as u64 - cur.position()
            )));
        }
        let ckpt = Checkpoint { header, weights };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

fn assign_tensor(
    weights: &mut ModelWeights,
    name: &str,
    shape: &[usize],
    data: Vec<f64>,
) -> Result<()> {
    let mat = |shape: &[usize], data: Vec<f64>| {
        Array2::from_shape_vec((shape[0], shape[1]), data)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    };
    match name {
        "w_proj" => weights.w_proj = mat(shape, data)?,
        "w_q" => weights.w_q = mat(shape, data)?,
        "w_k" => weights.w_k = mat(shape, data)?,
        "w_v" => weights.w_v = mat(shape, data)?,
        "w1" => weights.w1 = mat(shape, data)?,
        "b1" => weights.b1 = Array1::from_vec(data),
        "w2" => weights.w2 = mat(shape, data)?,
        "b2" => weights.b2 = Array1::from_vec(data),
        "w_o" => weights.w_o = mat(shape, data)?,
        "b_o" => weights.b_o = Array1::from_vec(data),
        "pos" => weights.pos = Some(mat(shape, data)?),
        other => {
            return Err(Error::Checkpoint(format!("unknown tensor '{other}'")));
        }
    }
    Ok(())
}

fn read_exact(cur: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::Checkpoint("file truncated".into()))
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(cur, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Builds a checkpoint from freshly trained (or initialized) weights,
/// rounding them to their stored f32 precision so the in-memory model
/// matches what a reader of the file will see.
pub fn make_checkpoint(header: CheckpointHeader, mut weights: ModelWeights) -> Checkpoint {
    for (_, data) in weights.tensors_mut() {
        for v in data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
    Checkpoint { header, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DEFAULT_RATIO_EPS;

    fn header(cfg: &ModelConfig) -> CheckpointHeader {
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            model: cfg.clone(),
            variant: EngineMode::Streaming,
            ratio_pairs: RatioPairSet::default(),
            ratio_eps: DEFAULT_RATIO_EPS,
            norm: NormStats::identity(),
            train: TrainConfig::for_variant(EngineMode::Streaming),
            decode_threshold: 0.5,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let cfg = ModelConfig::equation();
        let ckpt = make_checkpoint(header(&cfg), ModelWeights::init(&cfg, 77));
        let bytes = ckpt.to_bytes().unwrap();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        let bytes2 = loaded.to_bytes().unwrap();
        assert_eq!(bytes, bytes2);
        assert_eq!(loaded.header, ckpt.header);
        assert_eq!(loaded.weights, ckpt.weights);
    }

    #[test]
    fn positional_table_round_trips() {
        let mut cfg = ModelConfig::equation();
        cfg.positional_encoding = true;
        let ckpt = make_checkpoint(header(&cfg), ModelWeights::init(&cfg, 3));
        let bytes = ckpt.to_bytes().unwrap();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert!(loaded.weights.pos.is_some());
        assert_eq!(loaded.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let cfg = ModelConfig::equation();
        let ckpt = make_checkpoint(header(&cfg), ModelWeights::init(&cfg, 1));
        let bytes = ckpt.to_bytes().unwrap();

        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Checkpoint::from_bytes(&trailing).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        // Write with the equation preset, then doctor the header to claim
        // the table preset; tensor shapes no longer match.
        let cfg = ModelConfig::equation();
        let ckpt = make_checkpoint(header(&cfg), ModelWeights::init(&cfg, 5));
        let bytes = ckpt.to_bytes().unwrap();

        let json_start = 4 + 4 + 8;
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = std::str::from_utf8(&bytes[json_start..json_start + header_len]).unwrap();
        let doctored = json
            .replace("\"mlp_hidden\":64", "\"mlp_hidden\":256")
            .replace("\"mlp_out\":16", "\"mlp_out\":64")
            .replace("\"classifier_in\":16", "\"classifier_in\":64")
            .replace("\"preset\":\"equation\"", "\"preset\":\"table\"");
        let mut out = Vec::new();
        out.extend_from_slice(&bytes[..8]);
        out.extend_from_slice(&(doctored.len() as u64).to_le_bytes());
        out.extend_from_slice(doctored.as_bytes());
        out.extend_from_slice(&bytes[json_start + header_len..]);
        assert!(Checkpoint::from_bytes(&out).is_err());
    }

    #[test]
    fn f32_storage_is_exact_after_rounding() {
        let cfg = ModelConfig::equation();
        let raw = ModelWeights::init(&cfg, 9);
        let ckpt = make_checkpoint(header(&cfg), raw);
        let loaded = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(ckpt.weights, loaded.weights);
    }
}
