//! Checkpoint files.
//!
//! Layout: `b"PSCK"`, version byte `0x01`, little-endian `u32` length and the
//! JSON [`ModelConfig`], a `u32` record count, then per parameter: `u32` name
//! length, UTF-8 name, `u32` rank, `rank × u64` dims and the values as
//! little-endian `f64`. Loading rebuilds the skeleton from the config and
//! requires every record to agree with it by name and shape.

use std::path::Path;

use super::{ModelConfig, PeSaNet};
use crate::error::{Error, Result};
use crate::pde::write_atomic;

pub const PSCK_MAGIC: [u8; 4] = *b"PSCK";
pub const PSCK_VERSION: u8 = 0x01;

pub fn encode_checkpoint(model: &PeSaNet) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())?;
    let mut out = Vec::new();
    out.extend_from_slice(&PSCK_MAGIC);
    out.push(PSCK_VERSION);
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (_, p) in model.params().iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Truncated(format!("checkpoint ends inside {what}")))?;
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PeSaNet> {
    if bytes.len() < 4 || bytes[..4] != PSCK_MAGIC {
        return Err(Error::BadMagic {
            expected: PSCK_MAGIC,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.take(1, "version")?[0];
    if version != PSCK_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let len = r.u32("config length")?;
    let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)?;
    let mut model = PeSaNet::new(config)?;

    let count = r.u32("record count")?;
    if count != model.params().len() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint holds {count} parameters, config builds {}",
            model.params().len()
        )));
    }
    let ids: Vec<_> = model.params().iter().map(|(id, _)| id).collect();
    for id in ids {
        let name_len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| Error::CheckpointMismatch(format!("parameter name is not UTF-8: {e}")))?
            .to_string();
        let rank = r.u32("rank")?;
        let shape = (0..rank).map(|_| r.u64("dims")).collect::<Result<Vec<_>>>()?;
        let param = model.params_mut().get_mut(id);
        if name != param.name {
            return Err(Error::CheckpointMismatch(format!(
                "expected parameter {:?}, found {name:?}",
                param.name
            )));
        }
        if shape != param.value.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "parameter {name:?}: expected shape {:?}, found {shape:?}",
                param.value.shape()
            )));
        }
        let raw = r.take(8 * param.value.numel(), "values")?;
        for (v, c) in param.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::SizeMismatch {
            declared: r.pos,
            actual: bytes.len(),
        });
    }
    Ok(model)
}

pub fn save_checkpoint(model: &PeSaNet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PeSaNet> {
    decode_checkpoint(&std::fs::read(path)?)
}
