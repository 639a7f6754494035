//! CAGN checkpoint container.
//!
//! Layout (little-endian): magic "CAGN"; u32 version = 1; u64 tensor count;
//! per tensor: u32 name length, UTF-8 name, u32 ndim, u64 dims, u8 dtype tag
//! (0 = f32, 1 = f64), raw data; trailing 32-byte config hash.

use super::atomic::write_atomic;
use crate::engine::{DType, Scalar, Tensor};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub const CKPT_MAGIC: &[u8; 4] = b"CAGN";
pub const CKPT_VERSION: u32 = 1;

/// One named tensor with its raw little-endian payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<u8>,
}

/// An ordered bag of named tensors plus a 32-byte configuration hash.
/// Ordering is preserved so identical save calls produce identical bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    entries: Vec<(String, RawTensor)>,
    pub config_hash: [u8; 32],
}

impl Checkpoint {
    pub fn new(config_hash: [u8; 32]) -> Self {
        Checkpoint { entries: Vec::new(), config_hash }
    }

    pub fn push<E: Scalar>(&mut self, name: &str, t: &Tensor<E>) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Usage(format!("duplicate checkpoint tensor name {name}")));
        }
        let mut data = Vec::with_capacity(t.numel() * E::DTYPE.size());
        for &v in t.data() {
            data.extend_from_slice(&v.to_le_bytes_vec());
        }
        self.entries.push((
            name.to_string(),
            RawTensor { dims: t.shape().to_vec(), dtype: E::DTYPE, data },
        ));
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_raw(&self, name: &str) -> Option<&RawTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get<E: Scalar>(&self, name: &str) -> Result<Tensor<E>> {
        let raw = self
            .get_raw(name)
            .ok_or_else(|| Error::Incompatibility(format!("checkpoint is missing tensor {name}")))?;
        if raw.dtype != E::DTYPE {
            return Err(Error::Incompatibility(format!(
                "tensor {name} has dtype {:?}, expected {:?}",
                raw.dtype,
                E::DTYPE
            )));
        }
        let elem = E::DTYPE.size();
        let data: Vec<E> = raw
            .data
            .chunks_exact(elem)
            .map(|c| E::from_le_slice(c))
            .collect();
        Tensor::new(raw.dims.clone(), data)
    }

    /// Names present here but absent from `other` (for incompatibility
    /// diagnostics).
    pub fn missing_from(&self, required: &[String]) -> Vec<String> {
        let have: BTreeMap<&str, ()> = self.entries.iter().map(|(n, _)| (n.as_str(), ())).collect();
        required
            .iter()
            .filter(|n| !have.contains_key(n.as_str()))
            .cloned()
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (name, t) in &self.entries {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            buf.push(t.dtype.tag());
            buf.extend_from_slice(&t.data);
        }
        buf.extend_from_slice(&self.config_hash);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::Corruption {
                    offset: *pos as u64,
                    msg: format!("truncated while reading {what}"),
                });
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let magic = take(&mut pos, 4, "magic")?;
        if magic != CKPT_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected {CKPT_MAGIC:?}")));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
        if version != CKPT_VERSION {
            return Err(Error::Format(format!(
                "unknown checkpoint version {version}, expected {CKPT_VERSION}"
            )));
        }
        let count = u64::from_le_bytes(take(&mut pos, 8, "tensor count")?.try_into().unwrap());
        let mut entries = Vec::with_capacity(count as usize);
        for i in 0..count {
            let name_len =
                u32::from_le_bytes(take(&mut pos, 4, "name length")?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len, "name")?.to_vec())
                .map_err(|e| Error::Format(format!("tensor {i} name is not UTF-8: {e}")))?;
            let ndim =
                u32::from_le_bytes(take(&mut pos, 4, "ndim")?.try_into().unwrap()) as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(
                    u64::from_le_bytes(take(&mut pos, 8, "dim")?.try_into().unwrap()) as usize,
                );
            }
            let tag = take(&mut pos, 1, "dtype")?[0];
            let dtype = DType::from_tag(tag)
                .ok_or_else(|| Error::Format(format!("unknown dtype tag {tag} in {name}")))?;
            let numel: usize = dims.iter().product();
            let data = take(&mut pos, numel * dtype.size(), "tensor data")?.to_vec();
            if entries.iter().any(|(n, _): &(String, RawTensor)| *n == name) {
                return Err(Error::Format(format!("duplicate tensor name {name}")));
            }
            entries.push((name, RawTensor { dims, dtype, data }));
        }
        let hash: [u8; 32] = take(&mut pos, 32, "config hash")?.try_into().unwrap();
        if pos != bytes.len() {
            return Err(Error::Corruption {
                offset: pos as u64,
                msg: format!("{} trailing bytes", bytes.len() - pos),
            });
        }
        Ok(Checkpoint { entries, config_hash: hash })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
