//! `VEC1` checkpoint files.
//!
//! Layout, little-endian: magic `VEC1`, u16 tag length + UTF-8 architecture
//! tag, u32 tensor count, then per tensor a u16 name length + UTF-8 name,
//! u32 rank, `rank` u32 dims and the f32 payload in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Result, VeError};
use crate::features::Cursor;
use crate::numcore::{ParamStore, Tensor};

use super::params::{Architecture, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VEC1";
pub const CHECKPOINT_EXTENSION: &str = "vec";

fn put_str(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| VeError::Format(format!("{what} longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn get_str(c: &mut Cursor<'_>, what: &str) -> Result<String> {
    let len = c.u16(what)? as usize;
    let at = c.pos;
    String::from_utf8(c.take(len, what)?.to_vec()).map_err(|_| VeError::Corruption {
        offset: at,
        msg: format!("{what} is not UTF-8"),
    })
}

/// Serializes every tensor of `store` under `tag`. Values are narrowed to
/// f32; non-finite values are refused.
pub fn encode_tensors(tag: &str, store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_str(&mut out, tag, "tag")?;
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        if !p.tensor.is_finite() {
            return Err(VeError::Domain(format!("tensor {name:?} has non-finite values")));
        }
        put_str(&mut out, name, "tensor name")?;
        out.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.tensor.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Inverse of [`encode_tensors`]. Every tensor comes back trainable.
pub fn decode_tensors(buf: &[u8]) -> Result<(String, ParamStore)> {
    let mut c = Cursor::new(buf);
    let magic = c.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(VeError::Format(format!(
            "not a VEC1 checkpoint (magic {:?})",
            String::from_utf8_lossy(magic)
        )));
    }
    let tag = get_str(&mut c, "tag")?;
    let count = c.u32("tensor count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = get_str(&mut c, "tensor name")?;
        let rank = c.u32("rank")? as usize;
        if rank == 0 || rank * 4 > c.remaining() {
            return Err(VeError::Corruption {
                offset: c.pos,
                msg: format!("tensor {name:?} has implausible rank {rank}"),
            });
        }
        let shape = (0..rank)
            .map(|_| c.u32("dim").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| VeError::Format(format!("tensor {name:?} is too large")))?;
        let data = c.f32s(numel, "tensor payload")?;
        let tensor = Tensor::new(shape, data.into_iter().map(f64::from).collect())?;
        store
            .insert(name.clone(), tensor, true)
            .map_err(|_| VeError::Format(format!("duplicate tensor {name:?}")))?;
    }
    if c.remaining() != 0 {
        return Err(VeError::Corruption {
            offset: c.pos,
            msg: format!("{} trailing bytes", c.remaining()),
        });
    }
    Ok((tag, store))
}

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    encode_tensors(params.arch.tag(), &params.store)
}

/// Decodes and checks the tensors against the tagged architecture.
pub fn decode_checkpoint(buf: &[u8]) -> Result<ModelParams> {
    let (tag, store) = decode_tensors(buf)?;
    let arch: Architecture = tag.parse()?;
    ModelParams::from_store(arch, store)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode_checkpoint(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&fs::read(path)?)
}
