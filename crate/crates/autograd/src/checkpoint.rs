//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MPECKPT\0"
//! version    u32      1
//! count      u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   rank     u32, dims u64 x rank
//!   values   f32 x product(dims)
//! has_optim  u8       0 or 1
//! if 1:
//!   step     u64
//!   per tensor, in the same order:
//!     present u8; if 1: first moment f32 x n, second moment f32 x n
//! meta_len   u32, metadata (UTF-8 JSON)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MPECKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ParamStore<T>,
    pub optimizer: Option<OptimizerState<T>>,
    pub metadata: serde_json::Value,
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
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    }
}

fn put_f32s<T: Scalar>(out: &mut Vec<u8>, data: &[T]) {
    for x in data {
        out.extend_from_slice(&x.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: ParamStore<T>, metadata: serde_json::Value) -> Self {
        Self {
            params,
            optimizer: None,
            metadata,
        }
    }

    pub fn with_optimizer(mut self, optimizer: &AdamW<T>) -> Self {
        self.optimizer = Some(OptimizerState {
            step: optimizer.step,
            moments: optimizer.moments.clone(),
        });
        self
    }

    /// Rebuilds an optimizer from the stored state under `config`.
    pub fn restore_optimizer(&self, config: AdamWConfig) -> Option<AdamW<T>> {
        self.optimizer.as_ref().map(|s| AdamW {
            config,
            step: s.step,
            moments: s.moments.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (_, name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f32s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                for i in 0..self.params.len() {
                    match state.moments.get(i).and_then(Option::as_ref) {
                        None => out.push(0),
                        Some((m, v)) => {
                            out.push(1);
                            put_f32s(&mut out, m.data());
                            put_f32s(&mut out, v.data());
                        }
                    }
                }
            }
        }
        let meta = serde_json::to_vec(&self.metadata).expect("JSON value serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().product();
            let data = r.f32s(n)?;
            if params.id(&name).is_ok() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name:?}")));
            }
            params.add(name, Tensor::new(shape, data)?);
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let mut moments = Vec::with_capacity(count);
                for id in params.ids() {
                    let shape = params.value(id).shape().to_vec();
                    let n = params.value(id).numel();
                    moments.push(match r.u8()? {
                        0 => None,
                        _ => Some((Tensor::new(shape.clone(), r.f32s(n)?)?, Tensor::new(shape, r.f32s(n)?)?)),
                    });
                }
                Some(OptimizerState { step, moments })
            }
            flag => return Err(Error::Checkpoint(format!("bad optimizer flag {flag}"))),
        };
        let meta_len = r.u32()? as usize;
        let metadata =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            params,
            optimizer,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
