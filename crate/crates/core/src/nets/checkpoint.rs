//! Parameter checkpoints.
//!
//! Little-endian layout: the 8-byte magic `LSXCKPT1`, then per parameter
//! `u32` name length, UTF-8 name bytes, `u32` rank, `rank` × `u64` dims and
//! the `f64` payload in row-major order. Records run to end of file.

use std::fs;
use std::path::Path;

use lsx_autodiff::Tensor;

use super::params::ParamSet;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LSXCKPT1";

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ParamSet, String> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err("bad magic".into());
    }
    let mut c = Cursor { bytes, pos: 8 };
    let mut params = ParamSet::new();
    while c.pos < bytes.len() {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| e.to_string())?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or("dimension overflow")?;
        let raw = c.take(n.checked_mul(8).ok_or("dimension overflow")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| format!("{name}: {e}"))?;
        params.push(name, t);
    }
    Ok(params)
}

pub fn save(path: &Path, params: &ParamSet) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::format(path, reason))
}
