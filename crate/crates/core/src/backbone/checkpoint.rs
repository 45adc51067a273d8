//! Self-describing container of named `f64` arrays.
//!
//! Layout (little-endian): magic `DMVE`, format version `u32`, then one record
//! per array until end of file: name length `u32`, UTF-8 name, rank `u32`,
//! `rank` dimensions as `u64`, then the elements as `f64`.

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::{Error, Result, Scalar};

pub const MAGIC: &[u8; 4] = b"DMVE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn push(&mut self, name: &str, dims: Vec<usize>, data: Vec<f64>) {
        self.arrays.push(NamedArray {
            name: name.to_owned(),
            dims,
            data,
        });
    }

    /// Rank-0 entry.
    pub fn push_scalar(&mut self, name: &str, value: f64) {
        self.push(name, vec![], vec![value]);
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.get(name)
            .filter(|a| a.dims.is_empty() && a.data.len() == 1)
            .map(|a| a.data[0])
    }

    pub fn push_store<T: Scalar>(&mut self, store: &ParamStore<T>) {
        for (name, t) in store.named() {
            self.push(
                &name,
                vec![t.rows(), t.cols()],
                t.data().iter().map(|v| v.as_f64()).collect(),
            );
        }
    }

    /// Overwrites every parameter of `store` from the entries with matching
    /// qualified names.
    pub fn load_store<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for i in 0..store.len() {
            let name = store.qualified_name(i);
            let arr = self
                .get(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks `{name}`")))?;
            let (r, c) = store.value(i).shape();
            if arr.dims != [r, c] {
                return Err(Error::InvalidArgument(format!(
                    "`{name}` has dims {:?}, model expects [{r}, {c}]",
                    arr.dims
                )));
            }
            let data = arr.data.iter().map(|&v| T::c(v)).collect();
            *store.value_mut(i) = Tensor::from_vec(r, c, data).expect("dims checked");
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.dims.len() as u32).to_le_bytes());
            for &d in &a.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let mut ck = Checkpoint::new();
        while r.pos < bytes.len() {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| format!("array name: {e}"))?
                .to_owned();
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| format!("`{name}`: dimension overflow"))?;
            let raw = r.take(count.checked_mul(8).ok_or("size overflow")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            ck.arrays.push(NamedArray { name, dims, data });
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|m| Error::format(path, m))
    }
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).ok_or("length overflow")?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f32(&mut self) -> std::result::Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}
