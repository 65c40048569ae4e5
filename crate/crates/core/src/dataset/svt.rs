//! `SVT1` named-tensor container.
//!
//! Layout (little-endian): magic `SVT1`, `u32` entry count, then per entry a
//! `u16` name length, the ASCII name, a `u8` dtype (0 = u8, 1 = f32), a `u8`
//! rank, `rank` `u32` dims and the row-major payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SVT1";

#[derive(Clone, Debug, PartialEq)]
pub enum SvtTensor {
    U8 { dims: Vec<usize>, data: Vec<u8> },
    F32 { dims: Vec<usize>, data: Vec<f32> },
}

impl SvtTensor {
    pub fn u8(dims: impl Into<Vec<usize>>, data: Vec<u8>) -> Result<Self> {
        let dims = dims.into();
        check_len(&dims, data.len())?;
        Ok(SvtTensor::U8 { dims, data })
    }

    pub fn f32(dims: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let dims = dims.into();
        check_len(&dims, data.len())?;
        Ok(SvtTensor::F32 { dims, data })
    }

    pub fn scalar(value: f32) -> Self {
        SvtTensor::F32 {
            dims: vec![],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            SvtTensor::U8 { dims, .. } | SvtTensor::F32 { dims, .. } => dims,
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            SvtTensor::U8 { .. } => 0,
            SvtTensor::F32 { .. } => 1,
        }
    }
}

impl From<&Tensor<f32>> for SvtTensor {
    fn from(t: &Tensor<f32>) -> Self {
        SvtTensor::F32 {
            dims: t.dims().to_vec(),
            data: t.data().to_vec(),
        }
    }
}

fn check_len(dims: &[usize], len: usize) -> Result<()> {
    let n: usize = dims.iter().product();
    if n != len {
        return Err(Error::shape(format!("dims {dims:?} hold {n} values, got {len}")));
    }
    Ok(())
}

/// Ordered set of uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorSet {
    entries: Vec<(String, SvtTensor)>,
}

impl TensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: SvtTensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() || !name.is_ascii() || name.len() > u16::MAX as usize {
            return Err(Error::invalid(format!("tensor name {name:?} must be 1..65535 ASCII bytes")));
        }
        if tensor.dims().len() > u8::MAX as usize || tensor.dims().iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::shape(format!("tensor `{name}` dims {:?} do not fit the container", tensor.dims())));
        }
        if self.get(&name).is_some() {
            return Err(Error::DuplicateName(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&SvtTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&SvtTensor> {
        self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    /// The named f32 tensor.
    pub fn f32(&self, name: &str) -> Result<(&[usize], &[f32])> {
        match self.require(name)? {
            SvtTensor::F32 { dims, data } => Ok((dims, data)),
            SvtTensor::U8 { .. } => Err(Error::format(format!("tensor `{name}` is u8, expected f32"))),
        }
    }

    /// The named u8 tensor.
    pub fn u8(&self, name: &str) -> Result<(&[usize], &[u8])> {
        match self.require(name)? {
            SvtTensor::U8 { dims, data } => Ok((dims, data)),
            SvtTensor::F32 { .. } => Err(Error::format(format!("tensor `{name}` is f32, expected u8"))),
        }
    }

    /// The named f32 scalar (rank 0 or a single element).
    pub fn scalar(&self, name: &str) -> Result<f32> {
        let (_, data) = self.f32(name)?;
        match data {
            [v] => Ok(*v),
            _ => Err(Error::format(format!("tensor `{name}` is not a scalar"))),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SvtTensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match t {
                SvtTensor::U8 { data, .. } => out.extend_from_slice(data),
                SvtTensor::F32 { data, .. } => {
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::format("svt: bad magic, expected `SVT1`"));
        }
        let count = r.u32("entry count")?;
        let mut set = TensorSet::new();
        for e in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .ok()
                .filter(|s| s.is_ascii())
                .ok_or_else(|| Error::format(format!("svt: entry {e} name is not ASCII")))?
                .to_string();
            let dtype = r.take(1, "dtype")?[0];
            let ndim = r.take(1, "rank")?[0] as usize;
            let dims = (0..ndim)
                .map(|_| r.u32("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::format(format!("svt: tensor `{name}` dims {dims:?} overflow")))?;
            let tensor = match dtype {
                0 => SvtTensor::U8 {
                    dims,
                    data: r.take(n, &name)?.to_vec(),
                },
                1 => {
                    let raw = r.take(
                        n.checked_mul(4)
                            .ok_or_else(|| Error::format(format!("svt: tensor `{name}` is too large")))?,
                        &name,
                    )?;
                    SvtTensor::F32 {
                        dims,
                        data: raw
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect(),
                    }
                }
                other => return Err(Error::format(format!("svt: tensor `{name}` has unknown dtype {other}"))),
            };
            set.insert(name, tensor)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::format(format!("svt: {} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(set)
    }

    pub fn pack(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(format!(
                "svt: truncated while reading {what} ({n} bytes at offset {}, file has {})",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
