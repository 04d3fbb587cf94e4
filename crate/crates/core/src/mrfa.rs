//! MRFA: a minimal binary array container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MRFA" | version u8 = 0x01 | dtype u8 | rank u8 | rank x u64 dims | payload
//! ```
//!
//! dtype `0x01` is IEEE-754 binary64, dtype `0x02` is one byte per boolean
//! (0 or 1). The payload is row-major with the last dimension fastest.

use std::fs;
use std::path::Path;

use crate::error::{format_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"MRFA";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F64: u8 = 0x01;
pub const DTYPE_BOOL: u8 = 0x02;

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(Vec<f64>),
    Bool(Vec<bool>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::Real(v) => v.len(),
            ArrayData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional array as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct MrfaArray {
    pub dims: Vec<usize>,
    pub data: ArrayData,
}

impl MrfaArray {
    pub fn real(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(dims, ArrayData::Real(values))
    }

    pub fn boolean(dims: Vec<usize>, values: Vec<bool>) -> Result<Self> {
        Self::new(dims, ArrayData::Bool(values))
    }

    fn new(dims: Vec<usize>, data: ArrayData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::Domain(format!("rank {} exceeds 255", dims.len())));
        }
        let expected = element_count(&dims).ok_or_else(|| Error::Domain("dims overflow".into()))?;
        if expected != data.len() {
            return Err(Error::Domain(format!(
                "dims {:?} describe {} elements but {} were given",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    /// Consumes the array, returning its real payload or a format error.
    pub fn into_real(self, field: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        match self.data {
            ArrayData::Real(v) => Ok((self.dims, v)),
            ArrayData::Bool(_) => Err(format_err(
                field,
                "expected real (0x01) payload, found boolean",
            )),
        }
    }

    pub fn into_bool(self, field: &str) -> Result<(Vec<usize>, Vec<bool>)> {
        match self.data {
            ArrayData::Bool(v) => Ok((self.dims, v)),
            ArrayData::Real(_) => Err(format_err(
                field,
                "expected boolean (0x02) payload, found real",
            )),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload_len = match &self.data {
            ArrayData::Real(v) => v.len() * 8,
            ArrayData::Bool(v) => v.len(),
        };
        let mut out = Vec::with_capacity(7 + 8 * self.dims.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(match self.data {
            ArrayData::Real(_) => DTYPE_F64,
            ArrayData::Bool(_) => DTYPE_BOOL,
        });
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            ArrayData::Real(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::Bool(v) => out.extend(v.iter().map(|&b| b as u8)),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(format_err("magic", "file shorter than the 4-byte magic"));
        }
        if &bytes[..4] != MAGIC {
            return Err(format_err(
                "magic",
                format!("expected \"MRFA\", found {:?}", &bytes[..4]),
            ));
        }
        let version = *bytes
            .get(4)
            .ok_or_else(|| format_err("version", "missing"))?;
        if version != VERSION {
            return Err(format_err(
                "version",
                format!("unsupported version {version:#04x}"),
            ));
        }
        let dtype = *bytes.get(5).ok_or_else(|| format_err("dtype", "missing"))?;
        if dtype != DTYPE_F64 && dtype != DTYPE_BOOL {
            return Err(format_err("dtype", format!("unknown dtype {dtype:#04x}")));
        }
        let rank = *bytes.get(6).ok_or_else(|| format_err("rank", "missing"))? as usize;
        let header_len = 7 + 8 * rank;
        if bytes.len() < header_len {
            return Err(format_err(
                "dims",
                format!("header declares rank {rank} but dims are truncated"),
            ));
        }
        let dims: Vec<usize> = bytes[7..header_len]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .map(|d| {
                usize::try_from(d)
                    .map_err(|_| format_err("dims", format!("dimension {d} too large")))
            })
            .collect::<Result<_>>()?;
        let count =
            element_count(&dims).ok_or_else(|| format_err("dims", "element count overflows"))?;
        let elem = if dtype == DTYPE_F64 { 8 } else { 1 };
        let expected = count
            .checked_mul(elem)
            .ok_or_else(|| format_err("dims", "payload size overflows"))?;
        let payload = &bytes[header_len..];
        if payload.len() != expected {
            return Err(format_err(
                "payload",
                format!(
                    "dims {:?} require {} payload bytes, found {}",
                    dims,
                    expected,
                    payload.len()
                ),
            ));
        }
        let data = if dtype == DTYPE_F64 {
            ArrayData::Real(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        } else {
            let mut v = Vec::with_capacity(count);
            for (i, &b) in payload.iter().enumerate() {
                match b {
                    0 => v.push(false),
                    1 => v.push(true),
                    other => {
                        return Err(format_err(
                            "payload",
                            format!("boolean byte {other} at element {i}"),
                        ))
                    }
                }
            }
            ArrayData::Bool(v)
        };
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub fn write_mrfa(array: &MrfaArray, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, array.to_bytes())?;
    Ok(())
}

pub fn read_mrfa(path: impl AsRef<Path>) -> Result<MrfaArray> {
    let bytes = fs::read(path)?;
    MrfaArray::from_bytes(&bytes)
}
