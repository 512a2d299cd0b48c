//! Versioned binary container of named parameter blocks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"WKNN"
//! u32     format version (1)
//! u32     block count
//! block*  u32 name length, UTF-8 name,
//!         u8 dtype (1 = raw bytes, 4 = f32, 8 = f64),
//!         u32 rank, u64 per dimension,
//!         payload (product of dimensions × dtype size bytes)
//! ```

use crate::mat::Scalar;
use crate::mlp::Mlp;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"WKNN";
pub const FORMAT_VERSION: u32 = 1;
const RAW: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("missing block `{0}`")]
    Missing(String),
    #[error("block `{name}`: expected {expected}, found {found}")]
    Mismatch { name: String, expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dtype: u8,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put<T: Scalar>(&mut self, name: impl Into<String>, shape: &[usize], data: &[T]) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "block shape");
        let mut bytes = Vec::with_capacity(data.len() * T::DTYPE as usize);
        data.iter().for_each(|v| v.to_le(&mut bytes));
        self.insert(Block { name: name.into(), dtype: T::DTYPE, shape: shape.to_vec(), bytes });
    }

    pub fn put_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.insert(Block { name: name.into(), dtype: RAW, shape: vec![bytes.len()], bytes: bytes.to_vec() });
    }

    fn insert(&mut self, block: Block) {
        match self.blocks.iter_mut().find(|b| b.name == block.name) {
            Some(b) => *b = block,
            None => self.blocks.push(block),
        }
    }

    pub fn block(&self, name: &str) -> Result<&Block, CheckpointError> {
        self.blocks.iter().find(|b| b.name == name).ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Result<(Vec<usize>, Vec<T>), CheckpointError> {
        let b = self.block(name)?;
        if b.dtype != T::DTYPE {
            return Err(CheckpointError::Mismatch { name: name.into(), expected: format!("dtype {}", T::DTYPE), found: format!("dtype {}", b.dtype) });
        }
        let size = T::DTYPE as usize;
        Ok((b.shape.clone(), b.bytes.chunks_exact(size).map(T::from_le).collect()))
    }

    pub fn get_bytes(&self, name: &str) -> Result<&[u8], CheckpointError> {
        let b = self.block(name)?;
        if b.dtype != RAW {
            return Err(CheckpointError::Mismatch { name: name.into(), expected: "raw bytes".into(), found: format!("dtype {}", b.dtype) });
        }
        Ok(&b.bytes)
    }

    /// Stores every parameter block of `net` under `prefix`.
    pub fn put_mlp<T: Scalar>(&mut self, prefix: &str, net: &Mlp<T>) {
        for (name, shape, data) in net.blocks() {
            self.put(format!("{prefix}.{name}"), &shape, data);
        }
    }

    /// Restores the parameters of `net` (whose layout must match) from `prefix`.
    pub fn load_mlp<T: Scalar>(&self, prefix: &str, net: &mut Mlp<T>) -> Result<(), CheckpointError> {
        let mut flat = Vec::with_capacity(net.num_params());
        for (name, shape, _) in net.blocks() {
            let full = format!("{prefix}.{name}");
            let (found, data) = self.get::<T>(&full)?;
            if found != shape {
                return Err(CheckpointError::Mismatch { name: full, expected: format!("{shape:?}"), found: format!("{found:?}") });
            }
            flat.extend(data);
        }
        net.set_params(&flat).map_err(|e| CheckpointError::Format(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(b.dtype);
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&b.bytes);
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic).map_err(|_| CheckpointError::Magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = read_u32(&mut bytes)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let count = read_u32(&mut bytes)?;
        let mut blocks = Vec::new();
        for _ in 0..count {
            let name_len = read_u32(&mut bytes)? as usize;
            let name = String::from_utf8(take(&mut bytes, name_len)?.to_vec())
                .map_err(|_| CheckpointError::Format("block name is not UTF-8".into()))?;
            let dtype = take(&mut bytes, 1)?[0];
            if ![RAW, 4, 8].contains(&dtype) {
                return Err(CheckpointError::Format(format!("block `{name}` has unknown dtype {dtype}")));
            }
            let rank = read_u32(&mut bytes)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()) as usize);
            }
            let len = shape
                .iter()
                .try_fold(dtype as usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Format(format!("block `{name}` is too large")))?;
            let payload = take(&mut bytes, len)?.to_vec();
            blocks.push(Block { name, dtype, shape, bytes: payload });
        }
        if !bytes.is_empty() {
            return Err(CheckpointError::Format(format!("{} trailing bytes", bytes.len())));
        }
        Ok(Self { blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], CheckpointError> {
    if bytes.len() < n {
        return Err(CheckpointError::Format("truncated".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32, CheckpointError> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}
