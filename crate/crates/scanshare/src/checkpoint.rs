//! Checkpoint container:
//!
//! ```text
//! magic "SCNSHCKP" | u32 version | u32 header length | header JSON
//! | u32 tensor count | per tensor: u32 name length, name, u32 rank,
//!   u64 dims, f32 values
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use scanshare_core::train::{Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
use scanshare_core::Tensor;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"SCNSHCKP";

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ckpt.header.version.to_le_bytes());
    let header = serde_json::to_vec(&ckpt.header).expect("header serializes");
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            CliError::format(self.path, format!("truncated checkpoint: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(data: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { data, pos: 0, path };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(CliError::format(path, "not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CliError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = r.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(len)?)
        .map_err(|e| CliError::format(path, format!("bad header: {e}")))?;
    if header.version != version {
        return Err(CliError::format(path, "header version disagrees with the file version"));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| CliError::format(path, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| CliError::format(path, "dimension too large"))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CliError::format(path, format!("tensor '{name}' is too large")))?;
        let values = r
            .take(numel)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(&shape, values)
            .map_err(|e| CliError::format(path, format!("tensor '{name}': {e}")))?;
        tensors.push((name, t));
    }
    if r.pos != data.len() {
        return Err(CliError::format(path, format!("{} trailing bytes after the last tensor", data.len() - r.pos)));
    }
    Ok(Checkpoint { header, tensors })
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ckpt)).map_err(|e| CliError::io(path, e))
}

/// Reads and validates the whole file before returning anything.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&data, path)
}
