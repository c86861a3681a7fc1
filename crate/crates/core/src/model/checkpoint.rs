//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MAGNNCKP"
//! version    u32      1
//! header_len u32      byte length of the JSON header
//! header     bytes    UTF-8 JSON of the ModelConfig
//! count      u32      number of tensors
//! per tensor, in name order:
//!   name_len u32, name bytes (UTF-8)
//!   rank     u32, then rank x u64 dims
//!   values   prod(dims) x f64 (IEEE 754 bits, row-major)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MAGNNCKP";
pub const VERSION: u32 = 1;

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| fmt_err(format!("{what} too large for a checkpoint")))
}

pub fn write_checkpoint<W: Write>(mut w: W, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let header = serde_json::to_vec(config).map_err(|e| fmt_err(e.to_string()))?;
    let io = |e: std::io::Error| fmt_err(format!("write failed: {e}"));
    w.write_all(MAGIC).map_err(io)?;
    put_u32(&mut w, VERSION).map_err(io)?;
    put_u32(&mut w, len_u32(header.len(), "header")?).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    put_u32(&mut w, len_u32(params.len(), "parameter count")?).map_err(io)?;
    for (name, t) in params.iter() {
        put_u32(&mut w, len_u32(name.len(), "name")?).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        put_u32(&mut w, t.rank() as u32).map_err(io)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| fmt_err("truncated checkpoint"))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(ModelConfig, ModelParams)> {
    let mut r = Reader { inner: r };
    if r.bytes(8)? != MAGIC {
        return Err(fmt_err("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported checkpoint version {version}")));
    }
    let hlen = r.u32()? as usize;
    let header = r.bytes(hlen)?;
    let config: ModelConfig =
        serde_json::from_slice(&header).map_err(|e| fmt_err(format!("bad header: {e}")))?;
    let count = r.u32()?;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(nlen)?).map_err(|_| fmt_err("parameter name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        if !(1..=3).contains(&rank) {
            return Err(fmt_err(format!("parameter {name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| fmt_err("dimension overflow"))?);
        }
        let n: usize = shape.iter().product();
        let raw = r.bytes(n.checked_mul(8).ok_or_else(|| fmt_err("dimension overflow"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::from_vec(shape, data)?;
        if map.insert(name.clone(), t).is_some() {
            return Err(fmt_err(format!("duplicate parameter {name}")));
        }
    }
    let mut tail = [0u8; 1];
    if r.inner.read(&mut tail).map_err(|e| fmt_err(e.to_string()))? != 0 {
        return Err(fmt_err("trailing bytes after checkpoint"));
    }
    Ok((config, ModelParams::from_map(map)))
}
