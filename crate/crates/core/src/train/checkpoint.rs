//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "RSCKPT\0"  u32 version  u64 header_len  header JSON
//! per tensor, names ascending: u16 name_len, name, u8 rank, u64 dims[rank], f32 data
//! Adam m tensors, then Adam v tensors, same layout
//! u64 step
//! rng: 32-byte seed, u64 stream, u128 word position
//! f64 best_val_loss
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::nn::{ModelConfig, Parameters, Tensor};

pub const MAGIC: &[u8; 7] = b"RSCKPT\0";
pub const VERSION: u32 = 1;

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: Parameters<f32>,
    pub adam: AdamState<f32>,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub best_val_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    epoch: usize,
}

fn put_tensors(out: &mut Vec<u8>, p: &Parameters<f32>) -> Result<()> {
    for (name, t) in &p.tensors {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("tensor name too long: {name}")))?;
        out.extend(len.to_le_bytes());
        out.extend(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend((d as u64).to_le_bytes());
        }
        for &x in &t.data {
            out.extend(x.to_le_bytes());
        }
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            model: self.model,
            epoch: self.epoch,
        })?;
        out.extend((header.len() as u64).to_le_bytes());
        out.extend(&header);
        put_tensors(&mut out, &self.params)?;
        put_tensors(&mut out, &self.adam.m)?;
        put_tensors(&mut out, &self.adam.v)?;
        out.extend(self.adam.step.to_le_bytes());
        out.extend(self.rng.get_seed());
        out.extend(self.rng.get_stream().to_le_bytes());
        out.extend(self.rng.get_word_pos().to_le_bytes());
        out.extend(self.best_val_loss.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic bytes)".into()));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {VERSION}"
            )));
        }
        let header_len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad checkpoint header: {e}")))?;
        header.model.validate()?;
        let count = crate::nn::parameter_specs(&header.model).len();
        let params = r.tensors(count)?;
        let m = r.tensors(count)?;
        let v = r.tensors(count)?;
        params.check(&header.model)?;
        if !params.same_layout(&m) || !params.same_layout(&v) {
            return Err(Error::Checkpoint("Adam moments do not match the parameters".into()));
        }
        let step = r.u64()?;
        let mut rng = ChaCha8Rng::from_seed(r.array()?);
        rng.set_stream(r.u64()?);
        rng.set_word_pos(u128::from_le_bytes(r.array()?));
        let best_val_loss = f64::from_le_bytes(r.array()?);
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            model: header.model,
            params,
            adam: AdamState { m, v, step },
            epoch: header.epoch,
            rng,
            best_val_loss,
        })
    }

    /// Writes through a temporary file so a crash never leaves a torn
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated checkpoint: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn tensors(&mut self, count: usize) -> Result<Parameters<f32>> {
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(self.array()?) as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = self.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| self.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            tensors.insert(name, Tensor { shape, data });
        }
        Ok(Parameters { tensors })
    }
}
