//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field            | type                                   |
//! |------------------|----------------------------------------|
//! | magic            | 4 bytes `b"MLPK"`                      |
//! | version          | u32 (= 1)                              |
//! | scalar width     | u32, bytes per float (4 or 8)          |
//! | layer count      | u32, number of entries in layer_sizes  |
//! | layer_sizes      | u64 × layer count                      |
//! | output kind      | u8: 0 = identity, 1 = squash           |
//! | squash box       | (low, high) floats × output dim, only when kind = 1 |
//! | parameters       | floats, layer by layer: row-major `[out][in]` weights then biases |

use std::path::Path;

use super::mlp::{MlpModel, OutputActivation};
use super::scalar::Scalar;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MLPK";
const VERSION: u32 = 1;

pub fn encode<T: Scalar>(model: &MlpModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&T::WIDTH.to_le_bytes());
    out.extend_from_slice(&(model.layer_sizes().len() as u32).to_le_bytes());
    for &n in model.layer_sizes() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    match model.output_activation() {
        OutputActivation::Identity => out.push(0),
        OutputActivation::Squash { low, high } => {
            out.push(1);
            for (&l, &h) in low.iter().zip(high) {
                l.write_le(&mut out);
                h.write_le(&mut out);
            }
        }
    }
    for &p in model.params() {
        p.write_le(&mut out);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::InvalidArgument("truncated checkpoint".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn float<T: Scalar>(&mut self) -> Result<T> {
        Ok(T::read_le(self.take(T::WIDTH as usize)?))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<MlpModel<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::InvalidArgument("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let width = r.u32()?;
    if width != T::WIDTH {
        return Err(Error::InvalidArgument(format!(
            "checkpoint stores {width}-byte floats, expected {}",
            T::WIDTH
        )));
    }
    let count = r.u32()? as usize;
    let sizes = (0..count)
        .map(|_| r.u64().map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let out_dim = *sizes
        .last()
        .ok_or_else(|| Error::Shape("checkpoint has no layers".into()))?;
    let output = match r.take(1)?[0] {
        0 => OutputActivation::Identity,
        1 => {
            let mut low = Vec::with_capacity(out_dim);
            let mut high = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                low.push(r.float()?);
                high.push(r.float()?);
            }
            OutputActivation::squash(low, high)?
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown output activation tag {other}"
            )))
        }
    };
    let mut model = MlpModel::zeros(&sizes, output)?;
    for p in model.params_mut() {
        *p = r.float()?;
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidArgument("trailing bytes after checkpoint".into()));
    }
    Ok(model)
}

pub fn save<T: Scalar>(model: &MlpModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<MlpModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
