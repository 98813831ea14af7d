//! Datasets of embedding sequences, their on-disk formats, model checkpoints
//! and the synthetic generator.

mod checkpoint;
mod format;
mod import;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainSummary, CHECKPOINT_VERSION};
pub use format::{decode_dataset, encode_dataset, read_dataset, write_dataset, FormatError, DATASET_MAGIC, DATASET_VERSION};
pub use import::{import_jsonl, JsonRecord};
pub use synthetic::{between_class_energy, gen_synthetic, SyntheticSpec};

/// How labels relate to positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// One label per sub-word (token labels repeated over their sub-words).
    Token,
    /// One label per sequence, repeated at every position.
    Sequence,
}

impl TaskKind {
    pub(crate) fn code(self) -> u32 {
        match self {
            TaskKind::Token => 0,
            TaskKind::Sequence => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(TaskKind::Token),
            1 => Some(TaskKind::Sequence),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Token => "token",
            TaskKind::Sequence => "sequence",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "token" => Ok(TaskKind::Token),
            "sequence" => Ok(TaskKind::Sequence),
            other => Err(format!("unknown task kind '{other}' (expected token or sequence)")),
        }
    }
}

/// Free-form dataset description stored in the trailing JSON block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub task: String,
    #[serde(default)]
    pub language: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// One `N x E` sequence of contextual embeddings with per-position labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub id: u64,
    pub values: Array2<f32>,
    pub labels: Vec<u16>,
    /// `true` marks positions that count toward neither loss nor accuracy.
    pub ignore: Vec<bool>,
}

impl EmbeddingSequence {
    pub fn new(id: u64, values: Array2<f32>, labels: Vec<u16>) -> Self {
        let n = values.nrows();
        EmbeddingSequence {
            id,
            values,
            labels,
            ignore: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<EmbeddingSequence>,
    pub classes: usize,
    pub embed_dim: usize,
    pub kind: TaskKind,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Checks every structural invariant the file format relies on.
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Empty("embedding width"));
        }
        if self.classes < 2 || self.classes > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "class count {} outside [2, {}]",
                self.classes,
                u16::MAX
            )));
        }
        for (s, seq) in self.sequences.iter().enumerate() {
            let n = seq.len();
            if n == 0 || n > u32::MAX as usize {
                return Err(Error::InvalidConfig(format!("sequence {s} has invalid length {n}")));
            }
            crate::error::ensure_len("sequence embedding width", self.embed_dim, seq.values.ncols())?;
            crate::error::ensure_len("sequence label count", n, seq.labels.len())?;
            crate::error::ensure_len("sequence ignore mask length", n, seq.ignore.len())?;
            if let Some(((row, col), _)) = seq.values.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("sequence {s}, row {row}, column {col}"),
                });
            }
            let mut seen = None;
            for (i, (&label, &skip)) in seq.labels.iter().zip(&seq.ignore).enumerate() {
                if skip {
                    continue;
                }
                if label as usize >= self.classes {
                    return Err(Error::LabelOutOfRange {
                        position: i,
                        label: label as usize,
                        classes: self.classes,
                    });
                }
                if self.kind == TaskKind::Sequence {
                    match seen {
                        None => seen = Some(label),
                        Some(prev) if prev != label => {
                            return Err(Error::InvalidConfig(format!(
                                "sequence-level dataset has mixed labels within sequence {s}"
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Splits off the sequences from index `at` onward into a second dataset
    /// with the same classes and metadata.
    pub fn split(mut self, at: usize) -> Result<(Dataset, Dataset)> {
        if at == 0 || at >= self.sequences.len() {
            return Err(Error::InvalidConfig(format!(
                "split point {at} leaves an empty part of {} sequences",
                self.sequences.len()
            )));
        }
        let tail = self.sequences.split_off(at);
        let rest = Dataset {
            sequences: tail,
            meta: self.meta.clone(),
            ..self
        };
        Ok((self, rest))
    }

    pub fn positions(&self) -> usize {
        self.sequences
            .iter()
            .map(|s| s.ignore.iter().filter(|&&skip| !skip).count())
            .sum()
    }
}
