//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! b"PNCK" | version u32 | config_len u32 | config (key=value UTF-8)
//! | tensor_count u32 | per tensor: name_len u16, name, rank u8, dims u64×rank, f64×len
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::config::{format_key_values, parse_key_values};
use super::{init_model, ModelConfig, PolynormerModel};
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PNCK";

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint(model: &PolynormerModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = format_key_values(&model.config.to_map());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    let tensors = model.params.named();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(2);
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &dyn Fn() -> String) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return Err(ck(format!("truncated file while reading {}", what())));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &dyn Fn() -> String) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &dyn Fn() -> String) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &dyn Fn() -> String) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &dyn Fn() -> String) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint. The embedded config determines the expected tensor
/// schema; unknown, duplicate, missing or mis-shaped tensors are errors.
pub fn read_checkpoint(bytes: &[u8]) -> Result<PolynormerModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = || "header".to_string();
    if r.take(4, &header)? != MAGIC {
        return Err(ck("bad magic, expected PNCK"));
    }
    let version = r.u32(&header)?;
    if version != CHECKPOINT_VERSION {
        return Err(ck(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let cfg_what = || "config block".to_string();
    let cfg_len = r.u32(&cfg_what)? as usize;
    let cfg_text = std::str::from_utf8(r.take(cfg_len, &cfg_what)?).map_err(|_| ck("config block is not UTF-8"))?;
    let config = ModelConfig::from_map(&parse_key_values(cfg_text)?)?;

    let mut model = init_model(&config, 0)?;
    let expected: BTreeMap<String, (usize, usize)> =
        model.params.named().into_iter().map(|(n, m)| (n, m.shape())).collect();
    let mut loaded: BTreeMap<String, Matrix> = BTreeMap::new();

    let count = r.u32(&|| "tensor count".to_string())? as usize;
    for k in 0..count {
        let slot = || format!("header of tensor #{k}");
        let name_len = r.u16(&slot)? as usize;
        let name = std::str::from_utf8(r.take(name_len, &slot)?)
            .map_err(|_| ck(format!("tensor #{k} name is not UTF-8")))?
            .to_string();
        let named = || format!("tensor `{name}`");
        let &(rows, cols) = expected
            .get(&name)
            .ok_or_else(|| ck(format!("unknown tensor `{name}`")))?;
        let rank = r.u8(&named)?;
        let dims = (0..rank).map(|_| r.u64(&named)).collect::<Result<Vec<_>>>()?;
        if dims != [rows as u64, cols as u64] {
            return Err(ck(format!("tensor `{name}` has shape {dims:?}, expected [{rows}, {cols}]")));
        }
        let payload = r.take(rows * cols * 8, &named)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if loaded.insert(name.clone(), Matrix::from_vec(rows, cols, data)?).is_some() {
            return Err(ck(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(ck(format!("{} trailing bytes after the last tensor", bytes.len() - r.pos)));
    }
    let names: Vec<String> = expected.keys().cloned().collect();
    if let Some(missing) = names.iter().find(|n| !loaded.contains_key(*n)) {
        return Err(ck(format!("missing tensor `{missing}`")));
    }
    let order: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    for (name, slot) in order.iter().zip(model.params.tensors_mut()) {
        *slot = loaded.remove(name).expect("presence checked above");
    }
    Ok(model)
}

pub fn save_checkpoint(model: &PolynormerModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PolynormerModel> {
    read_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LocalKind, Variant};

    fn model() -> PolynormerModel {
        let mut cfg = ModelConfig::new(3, 8, 2, 1, 2, 4);
        cfg.variant = Variant::V2;
        init_model(&cfg, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let back = read_checkpoint(&write_checkpoint(&m)).unwrap();
        assert_eq!(back, m);
        let mut cfg = m.config.clone();
        cfg.local_kind = LocalKind::Gcn;
        let g = init_model(&cfg, 1).unwrap();
        assert_eq!(read_checkpoint(&write_checkpoint(&g)).unwrap(), g);
    }

    #[test]
    fn truncation_names_the_tensor() {
        let bytes = write_checkpoint(&model());
        let err = read_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("tensor `head.b`"), "{err}");
    }

    #[test]
    fn unknown_tensor_is_rejected() {
        let m = model();
        let mut bytes = write_checkpoint(&m);
        // Bump the tensor count and append an extra 1×1 tensor.
        let count_pos = 12 + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[count_pos..count_pos + 4].try_into().unwrap());
        bytes[count_pos..count_pos + 4].copy_from_slice(&(count + 1).to_le_bytes());
        bytes.extend_from_slice(&5u16.to_le_bytes());
        bytes.extend_from_slice(b"extra");
        bytes.push(2);
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&0f64.to_le_bytes());
        let err = read_checkpoint(&bytes).unwrap_err().to_string();
        assert!(err.contains("unknown tensor `extra`"), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = write_checkpoint(&model());
        bytes[4] = 9;
        assert!(read_checkpoint(&bytes).unwrap_err().to_string().contains("version"));
        bytes[0] = b'X';
        assert!(read_checkpoint(&bytes).unwrap_err().to_string().contains("magic"));
    }
}
