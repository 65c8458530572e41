//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "CLEMCKPT"
//! version      u32       1
//! dtype        u8        4 = f32, 8 = f64
//! header_len   u32
//! header       JSON      {"config": ModelConfig, "meta": {string: string}}
//! n_tensors    u32
//! per tensor:
//!   name_len   u16, name (UTF-8)
//!   ndim       u8, dims  u32 × ndim
//!   data       element × product(dims), row-major
//! trailer      8 bytes   "CKPTEND\0"
//! ```
//!
//! Tensors appear in [`Parameters::named_tensors`] order and are checked by
//! name and shape on load.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EncoderModel, ModelConfig, Parameters, Scalar};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLEMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const TRAILER: &[u8; 8] = b"CKPTEND\0";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Serializes `model` with free-form provenance `meta`.
pub fn save_checkpoint<T: Scalar>(
    model: &EncoderModel<T>,
    meta: &BTreeMap<String, String>,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.params.len() * T::BYTES + 4096);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::DTYPE);
    let header = serde_json::to_vec(&Header {
        config: model.config,
        meta: meta.clone(),
    })
    .expect("header serializes");
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors = model.params.named_tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            v.write_le(&mut out);
        }
    }
    out.extend_from_slice(TRAILER);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Restores a model. When `expected` is given, the stored config must equal
/// it.
pub fn load_checkpoint<T: Scalar>(
    bytes: &[u8],
    expected: Option<&ModelConfig>,
) -> Result<(EncoderModel<T>, BTreeMap<String, String>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let dtype = r.u8()?;
    if dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "stored element size {dtype} does not match requested {}",
            T::DTYPE
        )));
    }
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("stored config invalid: {e}")))?;
    if let Some(exp) = expected {
        if exp != &header.config {
            return Err(Error::Checkpoint(format!(
                "stored config {:?} conflicts with requested {:?}",
                header.config, exp
            )));
        }
    }
    let mut params = Parameters::<T>::zeros(&header.config);
    let layout: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    let count = r.u32()? as usize;
    if count != layout.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            layout.len()
        )));
    }
    for ((name, shape), dst) in layout.iter().zip(params.slices_mut()) {
        let name_len = r.u16()? as usize;
        let stored = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if stored != name {
            return Err(Error::Checkpoint(format!(
                "expected tensor `{name}`, found `{stored}`"
            )));
        }
        let ndim = r.u8()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {dims:?}, expected {shape:?}"
            )));
        }
        let raw = r.take(dst.len() * T::BYTES)?;
        for (v, chunk) in dst.iter_mut().zip(raw.chunks_exact(T::BYTES)) {
            *v = T::read_le(chunk);
        }
    }
    if r.take(TRAILER.len())? != TRAILER {
        return Err(Error::Checkpoint("missing end marker".into()));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after end marker".into()));
    }
    Ok((
        EncoderModel {
            config: header.config,
            params,
        },
        header.meta,
    ))
}
