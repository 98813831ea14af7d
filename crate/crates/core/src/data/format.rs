//! Binary dataset container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic      8 bytes   "SPRB0001"
//! header     u32 version, u32 E, u32 C, u32 task kind (0 token, 1 sequence),
//!            u64 sequence count
//! sequences  u64 id, u32 N, N*E f32 (row-major), N u16 labels, N u8 ignore flags
//! metadata   u64 byte length, UTF-8 JSON object
//! ```
//!
//! Nothing may follow the metadata block.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::{Dataset, DatasetMeta, EmbeddingSequence, TaskKind};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"SPRB0001";
pub const DATASET_VERSION: u32 = 1;

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic {found:?} (expected \"SPRB0001\")")]
    BadMagic { found: String },
    #[error("truncated at byte {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        offset: u64,
        needed: u64,
        available: u64,
    },
    #[error("unsupported format version {found} at byte {offset} (supported: {supported})")]
    UnsupportedVersion { offset: u64, found: u32, supported: u32 },
    #[error("invalid header field at byte {offset}: {message}")]
    InvalidHeader { offset: u64, message: String },
    #[error("non-finite embedding value at byte {offset}")]
    NonFinite { offset: u64 },
    #[error("label {label} at byte {offset} is out of range for {classes} classes")]
    LabelOutOfRange { offset: u64, label: u16, classes: u32 },
    #[error("ignore flag {value} at byte {offset} is not 0 or 1")]
    InvalidFlag { offset: u64, value: u8 },
    #[error("sequence starting at byte {offset} mixes labels in a sequence-level dataset")]
    MixedSequenceLabels { offset: u64 },
    #[error("invalid metadata at byte {offset}: {message}")]
    Metadata { offset: u64, message: String },
    #[error("{count} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: u64, count: u64 },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt payload: {message}")]
    Corrupt { message: String },
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, len: u64) -> Result<&'a [u8], FormatError> {
        let available = (self.buf.len() - self.pos) as u64;
        if len > available {
            return Err(FormatError::Truncated {
                offset: self.offset(),
                needed: len,
                available,
            });
        }
        let start = self.pos;
        self.pos += len as usize;
        Ok(&self.buf[start..self.pos])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != DATASET_MAGIC {
        return Err(FormatError::BadMagic {
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }

    let version_at = r.offset();
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(FormatError::UnsupportedVersion {
            offset: version_at,
            found: version,
            supported: DATASET_VERSION,
        });
    }
    let dim_at = r.offset();
    let embed_dim = r.u32()?;
    if embed_dim == 0 {
        return Err(FormatError::InvalidHeader {
            offset: dim_at,
            message: "embedding width is zero".into(),
        });
    }
    let classes_at = r.offset();
    let classes = r.u32()?;
    if !(2..=u16::MAX as u32).contains(&classes) {
        return Err(FormatError::InvalidHeader {
            offset: classes_at,
            message: format!("class count {classes} outside [2, {}]", u16::MAX),
        });
    }
    let kind_at = r.offset();
    let kind = TaskKind::from_code(r.u32()?).ok_or_else(|| FormatError::InvalidHeader {
        offset: kind_at,
        message: "unknown task kind".into(),
    })?;
    let count = r.u64()?;

    // Each sequence occupies at least 12 header bytes; bound the allocation by
    // what the buffer could possibly hold.
    let max_possible = (bytes.len() as u64 - r.offset()) / 12;
    let mut sequences = Vec::with_capacity(count.min(max_possible) as usize);
    for _ in 0..count {
        sequences.push(decode_sequence(&mut r, embed_dim, classes, kind)?);
    }

    let len = r.u64()?;
    let meta_at = r.offset();
    let raw = r.take(len)?;
    let meta: DatasetMeta = serde_json::from_slice(raw).map_err(|e| FormatError::Metadata {
        offset: meta_at,
        message: e.to_string(),
    })?;
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes {
            offset: r.offset(),
            count: (bytes.len() - r.pos) as u64,
        });
    }

    Ok(Dataset {
        sequences,
        classes: classes as usize,
        embed_dim: embed_dim as usize,
        kind,
        meta,
    })
}

fn decode_sequence(
    r: &mut Reader<'_>,
    embed_dim: u32,
    classes: u32,
    kind: TaskKind,
) -> Result<EmbeddingSequence, FormatError> {
    let start = r.offset();
    let id = r.u64()?;
    let len_at = r.offset();
    let n = r.u32()?;
    if n == 0 {
        return Err(FormatError::InvalidHeader {
            offset: len_at,
            message: "sequence length is zero".into(),
        });
    }
    let cells = n as u64 * embed_dim as u64;

    let values_at = r.offset();
    let raw = r.take(cells * 4)?;
    let mut values = Vec::with_capacity(cells as usize);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                offset: values_at + 4 * i as u64,
            });
        }
        values.push(v);
    }

    let labels_at = r.offset();
    let labels: Vec<u16> = r
        .take(n as u64 * 2)?
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();

    let flags_at = r.offset();
    let mut ignore = Vec::with_capacity(n as usize);
    for (i, &b) in r.take(n as u64)?.iter().enumerate() {
        match b {
            0 => ignore.push(false),
            1 => ignore.push(true),
            value => {
                return Err(FormatError::InvalidFlag {
                    offset: flags_at + i as u64,
                    value,
                })
            }
        }
    }

    let mut seen = None;
    for (i, (&label, &skip)) in labels.iter().zip(&ignore).enumerate() {
        if skip {
            continue;
        }
        if label as u32 >= classes {
            return Err(FormatError::LabelOutOfRange {
                offset: labels_at + 2 * i as u64,
                label,
                classes,
            });
        }
        if kind == TaskKind::Sequence {
            if seen.is_some_and(|prev| prev != label) {
                return Err(FormatError::MixedSequenceLabels { offset: start });
            }
            seen = Some(label);
        }
    }

    let values = Array2::from_shape_vec((n as usize, embed_dim as usize), values)
        .expect("cell count matches shape");
    Ok(EmbeddingSequence {
        id,
        values,
        labels,
        ignore,
    })
}

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.embed_dim as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.classes as u32).to_le_bytes());
    out.extend_from_slice(&dataset.kind.code().to_le_bytes());
    out.extend_from_slice(&(dataset.sequences.len() as u64).to_le_bytes());
    for seq in &dataset.sequences {
        out.extend_from_slice(&seq.id.to_le_bytes());
        out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        for v in seq.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &seq.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend(seq.ignore.iter().map(|&b| b as u8));
    }
    let meta = serde_json::to_vec(&dataset.meta).expect("metadata serializes");
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(dataset)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
