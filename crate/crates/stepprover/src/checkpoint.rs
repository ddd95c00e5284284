//! Binary weight checkpoints. Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "SPCK"
//! 4       4         format version (u32, currently 1)
//! 8       4         vocabulary size V (u32, 16)
//! 12      4         feature dimension D (u32, 4096)
//! 16      8         seed (u64)
//! 24      4         tag length L (u32)
//! 28      L         tag (UTF-8)
//! 28+L    8*V*D     weights, f64 LE, row-major by token: W[v][i] at (v*D + i)
//! ```

use std::fs;
use std::path::Path;

use stepprover_core::policy::{FEATURE_DIM, VOCAB};
use stepprover_core::PolicyParams;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SPCK";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &PolicyParams) -> Vec<u8> {
    let tag = params.version.as_bytes();
    let mut out = Vec::with_capacity(28 + tag.len() + 8 * VOCAB * FEATURE_DIM);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(VOCAB as u32).to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u32).to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
    out.extend_from_slice(tag);
    for w in params.to_row_major() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<PolicyParams, String> {
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| "truncated checkpoint".to_string());
    let u32_at = |at: usize| take(at, 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()));
    if take(0, 4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = u32_at(4)?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let (v, d) = (u32_at(8)? as usize, u32_at(12)? as usize);
    if (v, d) != (VOCAB, FEATURE_DIM) {
        return Err(format!("checkpoint shape {v}x{d}, expected {VOCAB}x{FEATURE_DIM}"));
    }
    let seed = u64::from_le_bytes(take(16, 8)?.try_into().unwrap());
    let tag_len = u32_at(24)? as usize;
    let tag = std::str::from_utf8(take(28, tag_len)?).map_err(|_| "checkpoint tag is not UTF-8".to_string())?;
    let body = take(28 + tag_len, 8 * v * d)?;
    if bytes.len() != 28 + tag_len + 8 * v * d {
        return Err("trailing bytes after checkpoint weights".into());
    }
    let rows: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    PolicyParams::from_row_major(&rows, seed, tag).ok_or_else(|| "bad weight count".to_string())
}

pub fn save(params: &PolicyParams, path: &Path) -> Result<()> {
    crate::io::write_bytes(path, &encode(params))
}

pub fn load(path: &Path) -> Result<PolicyParams> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::format(path, 0, m))
}
