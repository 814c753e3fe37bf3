//! Named parameter storage shared by models and the optimizer, plus the
//! portable binary checkpoint container.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Flat collection of named parameters. Indices are stable once added, so
/// model structs hold `usize` handles.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "param {name} shape/data mismatch");
        assert!(!self.index.contains_key(name), "duplicate parameter name {name}");
        let grad = vec![0.0; data.len()];
        self.entries.push(Param { name: name.to_string(), shape: shape.to_vec(), data, grad });
        self.index.insert(name.to_string(), self.entries.len() - 1);
        self.entries.len() - 1
    }

    /// Linear-layer init: zero-mean uniform scaled by 1/sqrt(in_dim).
    pub fn add_linear(&mut self, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> usize {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let data = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, &[in_dim, out_dim], data)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> usize {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    pub fn add_ones(&mut self, name: &str, shape: &[usize]) -> usize {
        let n = shape.iter().product();
        self.add(name, shape, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, idx: usize) -> &Param {
        &self.entries[idx]
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.entries[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn accumulate_grad(&mut self, idx: usize, grad: &[f64]) {
        for (g, d) in self.entries[idx].grad.iter_mut().zip(grad) {
            *g += d;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    /// Serializes all parameters into the checkpoint container:
    /// magic `DGCKPT`, version u32, entry count u32, then per entry a
    /// length-prefixed name, rank + dims, and the f64 payload. All integers
    /// and floats little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ParamStore> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(CHECKPOINT_MAGIC.len())?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CoreError::Schema("not a checkpoint file (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CoreError::Schema(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let count = cur.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| CoreError::Schema("checkpoint name is not utf-8".into()))?;
            let rank = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(cur.f64()?);
            }
            store.add(&name, &shape, data);
        }
        if cur.pos != bytes.len() {
            return Err(CoreError::Schema("trailing bytes after checkpoint payload".into()));
        }
        Ok(store)
    }

    /// Copies values from another store by name; shapes must match.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for e in &mut self.entries {
            let src = other
                .by_name(&e.name)
                .ok_or_else(|| CoreError::Schema(format!("checkpoint missing parameter {}", e.name)))?;
            if src.shape != e.shape {
                return Err(CoreError::Schema(format!(
                    "checkpoint parameter {} shape {:?} != expected {:?}",
                    e.name, src.shape, e.shape
                )));
            }
            e.data.clone_from(&src.data);
        }
        Ok(())
    }
}

pub const CHECKPOINT_MAGIC: &[u8] = b"DGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::Schema("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
