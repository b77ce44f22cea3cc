//! Binary checkpoint format:
//!
//! ```text
//! "FCV1" | version u32 | config length u32 | config JSON
//!        | records: name length u16, name, ndim u8, dims u32 × ndim, f32 payload
//!        | CRC32 u32 of everything before it
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CaseModel, MiniCNN14, ModelError, EMBEDDING1_DIM};
use crate::audio_io::{CaseConfig, CaseId, Stage2Tap};
use crate::nn::{Module, ParamKind, Tensor};

pub const MAGIC: &[u8; 4] = b"FCV1";
pub const FORMAT_VERSION: u32 = 1;
const CNN14_PREFIX: &str = "cnn14";

/// Architecture and routing metadata stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub case: CaseId,
    pub mel_bins_stage1: usize,
    pub mel_bins_stage2: usize,
    pub tap: Stage2Tap,
    pub embedding_dims: [usize; 2],
    pub seed: u64,
    pub format_version: u32,
}

impl CheckpointConfig {
    pub fn for_case(case: CaseId, seed: u64) -> Self {
        let c = case.config();
        Self {
            case,
            mel_bins_stage1: c.stage1_mel_bins,
            mel_bins_stage2: c.stage2_mel_bins,
            tap: c.stage2_tap,
            embedding_dims: [EMBEDDING1_DIM, c.stage2_tap.dim()],
            seed,
            format_version: FORMAT_VERSION,
        }
    }

    fn validate(&self) -> Result<CaseConfig, ModelError> {
        let expected = Self::for_case(self.case, self.seed);
        if *self != expected {
            return Err(ModelError::InvalidConfig(format!(
                "config {:?} disagrees with the {} case table",
                self, self.case
            )));
        }
        Ok(self.case.config())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn encode(cfg: &CheckpointConfig, module: &dyn Module<f32>, prefix: &str) -> Vec<u8> {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    module.visit(prefix, &mut |name, t, _| {
        let nb = name.as_bytes();
        out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        out.extend_from_slice(nb);
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_checkpoint(model: &CaseModel) -> Vec<u8> {
    encode(&CheckpointConfig::for_case(model.case(), model.seed), model, "")
}

/// Writes a stage-2-only checkpoint holding just the `cnn14.*` tensors.
pub fn save_stage2(cnn14: &MiniCNN14<f32>, case: CaseId, seed: u64) -> Vec<u8> {
    encode(&CheckpointConfig::for_case(case, seed), cnn14, CNN14_PREFIX)
}

/// Saves and returns the trailing CRC.
pub fn save_checkpoint_file(model: &CaseModel, path: &Path) -> Result<u32, ModelError> {
    let bytes = save_checkpoint(model);
    std::fs::write(path, &bytes).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes")))
}

pub fn load_checkpoint_file(path: &Path) -> Result<CaseModel, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    load_checkpoint(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::TensorShapeMismatch(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Verifies integrity and splits a checkpoint into its config and tensor
/// records. The CRC is checked before anything else is interpreted.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(CheckpointConfig, Vec<TensorRecord>), ModelError> {
    if bytes.len() < 4 + 4 + 4 + 4 {
        return Err(ModelError::BadMagic);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelError::CrcMismatch { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionUnsupported(version));
    }
    let json_len = r.u32()? as usize;
    let cfg: CheckpointConfig = serde_json::from_slice(r.take(json_len)?)
        .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    if cfg.format_version != version {
        return Err(ModelError::InvalidConfig(format!(
            "config says version {}, header says {version}",
            cfg.format_version
        )));
    }
    let mut records = Vec::new();
    while !r.done() {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| ModelError::TensorShapeMismatch("tensor name is not UTF-8".into()))?;
        let ndim = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = r.take(numel.checked_mul(4).ok_or_else(|| {
            ModelError::TensorShapeMismatch(format!("{name}: shape {shape:?} overflows"))
        })?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        records.push(TensorRecord { name, shape, data });
    }
    Ok((cfg, records))
}

/// Copies records into every tensor of `module`; each module tensor must be
/// present with its exact shape. Records outside `module` are reported
/// unless `allow_extra`.
fn fill(
    module: &mut dyn Module<f32>,
    prefix: &str,
    records: Vec<TensorRecord>,
    allow_extra: bool,
) -> Result<(), ModelError> {
    let mut by_name: HashMap<String, TensorRecord> = HashMap::with_capacity(records.len());
    for rec in records {
        if let Some(prev) = by_name.insert(rec.name.clone(), rec) {
            return Err(ModelError::TensorShapeMismatch(format!("duplicate tensor {}", prev.name)));
        }
    }
    let mut err = None;
    module.visit_mut(prefix, &mut |name, t: &mut Tensor<f32>, _: ParamKind| {
        if err.is_some() {
            return;
        }
        match by_name.remove(name) {
            None => err = Some(ModelError::TensorShapeMismatch(format!("missing tensor {name}"))),
            Some(rec) if rec.shape != t.shape() => {
                err = Some(ModelError::TensorShapeMismatch(format!(
                    "{name}: stored {:?}, expected {:?}",
                    rec.shape,
                    t.shape()
                )))
            }
            Some(rec) => t.data_mut().copy_from_slice(&rec.data),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if !allow_extra {
        if let Some(extra) = by_name.keys().min() {
            return Err(ModelError::TensorShapeMismatch(format!("unexpected tensor {extra}")));
        }
    }
    Ok(())
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<CaseModel, ModelError> {
    let (cfg, records) = read_checkpoint(bytes)?;
    cfg.validate()?;
    let mut model = CaseModel::new(cfg.case, cfg.seed);
    fill(&mut model, "", records, false)?;
    Ok(model)
}

/// Loads the stage-2 backbone from either a stage-2-only or a full
/// checkpoint. The result is frozen.
pub fn load_stage2(bytes: &[u8]) -> Result<(CheckpointConfig, MiniCNN14<f32>), ModelError> {
    let (cfg, records) = read_checkpoint(bytes)?;
    let case = cfg.validate()?;
    let mut cnn14 = MiniCNN14::new(case.stage2_wavegram, &mut ChaCha8Rng::seed_from_u64(0));
    cnn14.freeze();
    let records = records
        .into_iter()
        .filter(|r| r.name.starts_with("cnn14."))
        .collect();
    fill(&mut cnn14, CNN14_PREFIX, records, false)?;
    Ok((cfg, cnn14))
}
