//! Trajectory files.
//!
//! Layout: `b"PSTR"`, version byte `0x01`, a little-endian `u32` header
//! length, the UTF-8 JSON header, then `T·c·N·N` little-endian `f32` values
//! in `[t][channel][row][col]` order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Coefficients, SystemKind, SystemSpec, Trajectory};
use crate::error::{Error, Result};

pub const PSTR_MAGIC: [u8; 4] = *b"PSTR";
pub const PSTR_VERSION: u8 = 0x01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub system: SystemKind,
    #[serde(rename = "L")]
    pub domain_size: f64,
    #[serde(rename = "N")]
    pub grid: usize,
    pub channels: usize,
    pub dt: f64,
    pub save_stride: usize,
    #[serde(rename = "T")]
    pub snapshots: usize,
    pub seed: u64,
    pub coefficients: BTreeMap<String, f64>,
}

impl TrajectoryHeader {
    pub fn of(t: &Trajectory) -> Self {
        TrajectoryHeader {
            system: t.spec.kind(),
            domain_size: t.spec.domain_size(),
            grid: t.spec.grid(),
            channels: SystemSpec::CHANNELS,
            dt: t.spec.dt(),
            save_stride: t.save_stride,
            snapshots: t.len(),
            seed: t.seed,
            coefficients: t.spec.coefficients().to_map(),
        }
    }
}

pub fn encode_trajectory(t: &Trajectory) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&TrajectoryHeader::of(t))?;
    let mut out = Vec::with_capacity(9 + header.len() + 4 * t.raw().len());
    out.extend_from_slice(&PSTR_MAGIC);
    out.push(PSTR_VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in t.raw() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_trajectory(bytes: &[u8]) -> Result<Trajectory> {
    if bytes.len() < 4 || bytes[..4] != PSTR_MAGIC {
        return Err(Error::BadMagic {
            expected: PSTR_MAGIC,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let Some(&version) = bytes.get(4) else {
        return Err(Error::Truncated("missing version byte".into()));
    };
    if version != PSTR_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let Some(len_bytes) = bytes.get(5..9) else {
        return Err(Error::Truncated("missing header length".into()));
    };
    let header_len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
    let Some(header_bytes) = bytes.get(9..9 + header_len) else {
        return Err(Error::Truncated(format!(
            "header declares {header_len} bytes, only {} present",
            bytes.len() - 9
        )));
    };
    let header: TrajectoryHeader = serde_json::from_slice(header_bytes)?;
    if header.channels != SystemSpec::CHANNELS {
        return Err(Error::Config(format!(
            "expected {} channels, header has {}",
            SystemSpec::CHANNELS,
            header.channels
        )));
    }
    let coefficients = Coefficients::from_map(header.system, &header.coefficients)?;
    let spec = SystemSpec::new(header.domain_size, header.grid, header.dt, coefficients)?;

    let payload = &bytes[9 + header_len..];
    let per_snapshot = header.channels * header.grid * header.grid;
    if payload.len() % (4 * per_snapshot) != 0 {
        return Err(Error::Truncated(format!(
            "payload of {} bytes is not a whole number of {}-value snapshots",
            payload.len(),
            per_snapshot
        )));
    }
    let declared = header.snapshots * per_snapshot;
    let actual = payload.len() / 4;
    if declared != actual {
        return Err(Error::SizeMismatch { declared, actual });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Trajectory::from_raw(spec, header.seed, header.save_stride, values)
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_trajectory(t: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_trajectory(t)?)
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    decode_trajectory(&fs::read(path)?)
}

/// Write `bytes` to `path.tmp`, sync, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
