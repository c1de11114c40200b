//! Checkpoint files: a JSON header (network config + tensor manifest)
//! followed by one `.nt` record per tensor, in manifest order.
//!
//! ```text
//! "DWRSCKPT"  u32 version  u64 header_len  header JSON  nt records...
//! ```
//! Integers are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::model::plan;
use crate::engine::{read_nt, write_nt};
use crate::error::{Error, Result};
use crate::params::{ParamKind, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DWRSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: NetworkConfig,
    tensors: Vec<ManifestEntry>,
}

fn expected_manifest(cfg: &NetworkConfig) -> Result<Vec<ManifestEntry>> {
    Ok(plan(cfg, 32, 32)?
        .param_layout()
        .into_iter()
        .map(|s| ManifestEntry {
            name: s.name,
            kind: s.kind,
            shape: s.shape,
        })
        .collect())
}

pub fn write_checkpoint<W: Write>(mut out: W, cfg: &NetworkConfig, store: &ParamStore) -> Result<()> {
    let tensors: Vec<ManifestEntry> = store
        .iter()
        .map(|(name, p)| ManifestEntry {
            name: name.to_string(),
            kind: p.kind,
            shape: p.tensor.shape(),
        })
        .collect();
    if tensors != expected_manifest(cfg)? {
        return Err(Error::Format("parameter store does not match the network config".into()));
    }
    let header = serde_json::to_vec(&Header {
        config: cfg.clone(),
        tensors,
    })?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for (_, p) in store.iter() {
        write_nt(&mut out, &p.tensor)?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("checkpoint truncated in {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(NetworkConfig, ParamStore)> {
    let mut magic = [0u8; 8];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    read_exact(&mut input, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    read_exact(&mut input, &mut len, "header length")?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut header = vec![0u8; len as usize];
    read_exact(&mut input, &mut header, "header")?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    header.config.validate()?;
    if header.tensors != expected_manifest(&header.config)? {
        return Err(Error::Format("checkpoint manifest does not match its network config".into()));
    }
    let mut store = ParamStore::new(header.config.bn_eps, header.config.bn_momentum);
    for entry in header.tensors {
        let t = read_nt(&mut input).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("tensor {}: {m}", entry.name)),
            other => other,
        })?;
        if t.shape() != entry.shape {
            return Err(Error::Format(format!(
                "tensor {} has shape {:?}, manifest says {:?}",
                entry.name,
                t.shape(),
                entry.shape
            )));
        }
        store.insert(entry.name, entry.kind, t)?;
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok((header.config, store))
}

pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &NetworkConfig, store: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, cfg, store)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkConfig, ParamStore)> {
    let bytes = fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}
