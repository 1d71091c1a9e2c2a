//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "LICFGMLP"
//! version      u32      1
//! activation   u8       0 = tanh, 1 = relu
//! layer count  u32      number of sizes (>= 2)
//! sizes        u32 * layer count
//! param count  u64      must equal the count implied by the sizes
//! params       f64 * param count, IEEE-754 bits
//! ```
//!
//! Parameters are stored in `[W0, b0, W1, b1, ..]` order, so a
//! write/read cycle is bit-exact.

use std::path::Path;

use thiserror::Error;

use super::{Activation, MlpParams};

pub const MAGIC: &[u8; 8] = b"LICFGMLP";
pub const VERSION: u32 = 1;

const MAX_LAYERS: usize = 64;
const MAX_WIDTH: usize = 1 << 16;
const MAX_PARAMS: u64 = 1 << 26;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a parameter checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unknown activation tag {0}")]
    Activation(u8),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("parameter count {found} does not match architecture ({expected})")]
    ParamCount { expected: u64, found: u64 },
    #[error("parameter {0} is not finite")]
    NonFinite(usize),
    #[error("{0} trailing bytes after parameters")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(p: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 4 * p.sizes().len() + 8 * p.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match p.activation() {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    });
    out.extend_from_slice(&(p.sizes().len() as u32).to_le_bytes());
    for &s in p.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(p.param_count() as u64).to_le_bytes());
    for v in p.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<MlpParams, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(8, "magic")? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let activation = match r.take(1, "activation")?[0] {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        t => return Err(CheckpointError::Activation(t)),
    };
    let n_sizes = r.u32("layer count")? as usize;
    if !(2..=MAX_LAYERS).contains(&n_sizes) {
        return Err(CheckpointError::Architecture(format!("{n_sizes} layer sizes")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        let s = r.u32("layer sizes")? as usize;
        if s == 0 || s > MAX_WIDTH {
            return Err(CheckpointError::Architecture(format!("layer width {s}")));
        }
        sizes.push(s);
    }
    let expected: u64 = sizes.windows(2).map(|w| (w[0] * w[1] + w[1]) as u64).sum();
    let found = r.u64("parameter count")?;
    if found != expected {
        return Err(CheckpointError::ParamCount { expected, found });
    }
    if expected > MAX_PARAMS {
        return Err(CheckpointError::Architecture(format!("{expected} parameters")));
    }
    let raw = r.take(expected as usize * 8, "parameters")?;
    let mut flat = Vec::with_capacity(expected as usize);
    for (i, chunk) in raw.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(CheckpointError::NonFinite(i));
        }
        flat.push(v);
    }
    if !r.buf.is_empty() {
        return Err(CheckpointError::Trailing(r.buf.len()));
    }
    MlpParams::from_flat(&sizes, activation, &flat)
        .map_err(|e| CheckpointError::Architecture(e.to_string()))
}

pub fn save(p: &MlpParams, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(p))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MlpParams, CheckpointError> {
    decode(&std::fs::read(path)?)
}
