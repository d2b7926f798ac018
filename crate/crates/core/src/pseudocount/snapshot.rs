//! Binary table snapshots.
//!
//! ```text
//! magic "CLUSTTAB" (8 bytes) | version u32 (=1) | dim u32 | K u64
//! K x ( dim x f32 center | u64 count )
//! ```
//!
//! Little-endian throughout. An empty table is written with `dim = 0`.

use std::fs;
use std::path::Path;

use super::{GlobalClusterTable, TableEntry};
use crate::error::{Error, ParseErrorKind, Result};

pub const TABLE_MAGIC: &[u8; 8] = b"CLUSTTAB";
pub const TABLE_VERSION: u32 = 1;

impl GlobalClusterTable {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim.unwrap_or(0);
        let mut out = Vec::with_capacity(24 + self.entries.len() * (dim * 4 + 8));
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            for v in &e.center {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&e.count.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], kappa: f64) -> Result<Self> {
        let need = |at: usize, n: usize| -> Result<&[u8]> {
            bytes.get(at..at + n).ok_or_else(|| {
                Error::parse(
                    at,
                    ParseErrorKind::Truncated {
                        needed: n,
                        available: bytes.len().saturating_sub(at),
                    },
                )
            })
        };
        let magic = need(0, 8)?;
        if magic != TABLE_MAGIC {
            return Err(Error::parse(
                0,
                ParseErrorKind::CorruptHeader(format!("bad magic {magic:?}")),
            ));
        }
        let version = u32::from_le_bytes(need(8, 4)?.try_into().unwrap());
        if version != TABLE_VERSION {
            return Err(Error::parse(
                8,
                ParseErrorKind::CorruptHeader(format!("unsupported version {version}")),
            ));
        }
        let dim = u32::from_le_bytes(need(12, 4)?.try_into().unwrap()) as usize;
        let k = u64::from_le_bytes(need(16, 8)?.try_into().unwrap()) as usize;
        if k > 0 && dim == 0 {
            return Err(Error::parse(
                12,
                ParseErrorKind::CorruptHeader("non-empty table with dimension 0".into()),
            ));
        }
        let mut at = 24;
        let mut entries = Vec::with_capacity(k.min(bytes.len() / (dim * 4 + 8).max(1)));
        for _ in 0..k {
            let raw = need(at, dim * 4)?;
            let center = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            at += dim * 4;
            let count = u64::from_le_bytes(need(at, 8)?.try_into().unwrap());
            at += 8;
            entries.push(TableEntry { center, count });
        }
        if at != bytes.len() {
            return Err(Error::parse(
                at,
                ParseErrorKind::CorruptHeader(format!("{} trailing bytes", bytes.len() - at)),
            ));
        }
        GlobalClusterTable::from_parts(kappa, (k > 0).then_some(dim), entries)
    }
}

pub fn table_snapshot(table: &GlobalClusterTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Restores a snapshot; `kappa` is run configuration and is not stored.
pub fn table_restore(path: impl AsRef<Path>, kappa: f64) -> Result<GlobalClusterTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    GlobalClusterTable::from_bytes(&bytes, kappa)
}
