//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `"LXF1"`, `u32` metadata length, metadata JSON, `u32` tensor count, then
//! per tensor: `u32` name length, UTF-8 name, `u32` rows, `u32` cols and
//! `rows*cols` `f64` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::Matrix;
use crate::corpus::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LXF1";

pub fn to_bytes(meta: &serde_json::Value, params: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let meta = serde_json::to_vec(meta)?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(serde_json::Value, ParamStore)> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let n = r.u32()?;
    let meta: serde_json::Value = serde_json::from_slice(r.take(n)?)?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let n = r.u32()?;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let (rows, cols) = (r.u32()?, r.u32()?);
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if store.id(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        store.add(name, Matrix::from_vec(rows, cols, data));
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((meta, store))
}

pub fn save(path: &Path, meta: &serde_json::Value, params: &ParamStore) -> Result<()> {
    let bytes = to_bytes(meta, params)?;
    write_atomic(path, |w| w.write_all(&bytes))
}

pub fn load(path: &Path) -> Result<(serde_json::Value, ParamStore)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Requires `loaded` to hold exactly the tensors of `expected`, with equal
/// shapes.
pub fn validate_layout(loaded: &ParamStore, expected: &ParamStore) -> Result<()> {
    if loaded.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors, configuration implies {}",
            loaded.len(),
            expected.len()
        )));
    }
    for (_, name, t) in expected.iter() {
        let got = loaded
            .by_name(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if got.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, configuration implies {:?}",
                got.shape(),
                t.shape()
            )));
        }
    }
    Ok(())
}
