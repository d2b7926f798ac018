//! Binary embedding-trace files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! header   : magic "EMBTRACE" (8 bytes) | version u32 (=1) | dim u32
//! episode* : length u32 | dim u32 | flags u8 (bit 0: positions present)
//!            then `length` records of  dim x f32  [+ x f32, y f32 if bit 0]
//! ```
//!
//! Episodes run until end of file. The per-episode `dim` must repeat the
//! header's value; a disagreement is reported as a dimension mismatch.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, ParseErrorKind, Result};

pub const TRACE_MAGIC: &[u8; 8] = b"EMBTRACE";
pub const TRACE_VERSION: u32 = 1;
const FLAG_POSITIONS: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEpisode {
    pub embeddings: Vec<EmbeddingVector>,
    /// Agent `(x, y)` per step, when known.
    pub positions: Option<Vec<(f32, f32)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTrace {
    pub dim: usize,
    pub episodes: Vec<TraceEpisode>,
}

impl EmbeddingTrace {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            episodes: Vec::new(),
        }
    }

    pub fn total_vectors(&self) -> usize {
        self.episodes.iter().map(|e| e.embeddings.len()).sum()
    }

    fn validate(&self) -> Result<()> {
        let dim = u32::try_from(self.dim)
            .map_err(|_| Error::InvalidArgument(format!("dimension {} too large", self.dim)))?;
        for (i, ep) in self.episodes.iter().enumerate() {
            if u32::try_from(ep.embeddings.len()).is_err() {
                return Err(Error::InvalidArgument(format!("episode {i} too long")));
            }
            if let Some(bad) = ep.embeddings.iter().find(|e| e.dim() != dim as usize) {
                return Err(Error::InvalidArgument(format!(
                    "episode {i} holds a vector of dimension {} in a trace of dimension {}",
                    bad.dim(),
                    self.dim
                )));
            }
            if let Some(pos) = &ep.positions {
                if pos.len() != ep.embeddings.len() {
                    return Err(Error::InvalidArgument(format!(
                        "episode {i} has {} positions for {} vectors",
                        pos.len(),
                        ep.embeddings.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(16 + self.total_vectors() * (self.dim + 2) * 4);
        out.extend_from_slice(TRACE_MAGIC);
        out.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for ep in &self.episodes {
            out.extend_from_slice(&(ep.embeddings.len() as u32).to_le_bytes());
            out.extend_from_slice(&(self.dim as u32).to_le_bytes());
            out.push(if ep.positions.is_some() {
                FLAG_POSITIONS
            } else {
                0
            });
            for (t, e) in ep.embeddings.iter().enumerate() {
                for v in e.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(pos) = &ep.positions {
                    out.extend_from_slice(&pos[t].0.to_le_bytes());
                    out.extend_from_slice(&pos[t].1.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(8)?;
        if magic != TRACE_MAGIC {
            return Err(Error::parse(
                0,
                ParseErrorKind::CorruptHeader(format!("bad magic {magic:?}")),
            ));
        }
        let version_at = cur.pos;
        let version = cur.u32()?;
        if version != TRACE_VERSION {
            return Err(Error::parse(
                version_at,
                ParseErrorKind::CorruptHeader(format!("unsupported version {version}")),
            ));
        }
        let dim = cur.u32()? as usize;
        let mut trace = EmbeddingTrace::new(dim);
        while !cur.at_end() {
            let len = cur.u32()? as usize;
            let dim_at = cur.pos;
            let ep_dim = cur.u32()? as usize;
            if ep_dim != dim {
                return Err(Error::parse(
                    dim_at,
                    ParseErrorKind::DimensionMismatch {
                        expected: dim,
                        found: ep_dim,
                    },
                ));
            }
            let flags_at = cur.pos;
            let flags = cur.take(1)?[0];
            if flags & !FLAG_POSITIONS != 0 {
                return Err(Error::parse(
                    flags_at,
                    ParseErrorKind::CorruptHeader(format!("unknown episode flags {flags:#04x}")),
                ));
            }
            let with_pos = flags & FLAG_POSITIONS != 0;
            let mut embeddings = Vec::with_capacity(len);
            let mut positions = with_pos.then(|| Vec::with_capacity(len));
            for _ in 0..len {
                let raw = cur.take(dim * 4)?;
                embeddings.push(EmbeddingVector(
                    raw.chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect(),
                ));
                if let Some(pos) = positions.as_mut() {
                    let x = cur.f32()?;
                    let y = cur.f32()?;
                    pos.push((x, y));
                }
            }
            trace.episodes.push(TraceEpisode {
                embeddings,
                positions,
            });
        }
        Ok(trace)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::parse(
                self.pos,
                ParseErrorKind::Truncated {
                    needed: n,
                    available,
                },
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_trace(trace: &EmbeddingTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = trace.to_bytes()?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<EmbeddingTrace> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTrace::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_three() -> EmbeddingTrace {
        let mut trace = EmbeddingTrace::new(4);
        for ep in 0..2 {
            let embeddings = (0..3)
                .map(|t| {
                    EmbeddingVector(
                        (0..4)
                            .map(|i| (ep * 100 + t * 10 + i) as f32 * 0.5)
                            .collect(),
                    )
                })
                .collect();
            trace.episodes.push(TraceEpisode {
                embeddings,
                positions: (ep == 1).then(|| vec![(0.25, 1.5), (0.5, 1.5), (0.75, -2.0)]),
            });
        }
        trace
    }

    #[test]
    fn empty_trace_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.trace");
        let trace = EmbeddingTrace::new(384);
        write_trace(&trace, &path).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
        assert_eq!(fs::metadata(&path).unwrap().len(), 16);
    }

    #[test]
    fn small_trace_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.trace");
        let trace = two_by_three();
        write_trace(&trace, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        // header + 2 episode headers + 3 plain records + 3 records with positions
        assert_eq!(bytes.len(), 16 + 2 * 9 + 3 * 16 + 3 * 24);
        assert_eq!(&bytes[..8], b"EMBTRACE");
        assert_eq!(&bytes[8..16], &[1, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(&bytes[16..25], &[3, 0, 0, 0, 4, 0, 0, 0, 0]);
        // first value of episode 0 is 0.0, second is 0.5
        assert_eq!(&bytes[25..33], &[0, 0, 0, 0, 0, 0, 0, 0x3f]);
        let back = read_trace(&path).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn bad_magic_is_corrupt_header() {
        let mut bytes = two_by_three().to_bytes().unwrap();
        bytes[0] = b'X';
        let err = EmbeddingTrace::from_bytes(&bytes).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                offset: 0,
                kind: ParseErrorKind::CorruptHeader(_)
            }
        ));
    }

    #[test]
    fn mid_file_dimension_mismatch() {
        let trace = two_by_three();
        let mut bytes = trace.to_bytes().unwrap();
        // second episode header starts after header, first episode header, 3 records
        let second = 16 + 9 + 3 * 16;
        bytes[second + 4] = 5;
        let err = EmbeddingTrace::from_bytes(&bytes).unwrap_err();
        match err {
            Error::Parse {
                offset,
                kind:
                    ParseErrorKind::DimensionMismatch {
                        expected: 4,
                        found: 5,
                    },
            } => assert_eq!(offset, second + 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_record_reports_offset() {
        let bytes = two_by_three().to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 3];
        let err = EmbeddingTrace::from_bytes(cut).unwrap_err();
        match err {
            Error::Parse {
                offset,
                kind:
                    ParseErrorKind::Truncated {
                        needed: 4,
                        available: 1,
                    },
            } => assert_eq!(offset, bytes.len() - 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_header_is_truncated() {
        let err = EmbeddingTrace::from_bytes(b"EMBT").unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                offset: 0,
                kind: ParseErrorKind::Truncated { .. }
            }
        ));
    }

    #[test]
    fn writer_rejects_inconsistent_dim() {
        let mut trace = two_by_three();
        trace.episodes[0].embeddings[1].0.push(1.0);
        assert!(matches!(trace.to_bytes(), Err(Error::InvalidArgument(_))));
    }

    fn arb_trace() -> impl Strategy<Value = EmbeddingTrace> {
        (1usize..6).prop_flat_map(|dim| {
            let episode = (
                prop::collection::vec(prop::collection::vec(any::<f32>(), dim), 0..5),
                any::<bool>(),
                any::<(f32, f32)>(),
            )
                .prop_map(|(vecs, with_pos, p)| TraceEpisode {
                    positions: with_pos.then(|| vec![p; vecs.len()]),
                    embeddings: vecs.into_iter().map(EmbeddingVector).collect(),
                });
            prop::collection::vec(episode, 0..4)
                .prop_map(move |episodes| EmbeddingTrace { dim, episodes })
        })
    }

    proptest! {
        #[test]
        fn read_after_write_is_identity(trace in arb_trace()) {
            let bytes = trace.to_bytes().unwrap();
            let back = EmbeddingTrace::from_bytes(&bytes).unwrap();
            // compare through bytes so NaN payloads count as equal
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            prop_assert_eq!(back.episodes.len(), trace.episodes.len());
        }
    }
}
