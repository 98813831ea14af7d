//! JSON model checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so save/load/save is byte-exact and forward passes of a
//! reloaded model are bitwise identical.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::error::{Error, Result};
use crate::filters::{FilterBand, SpectralFilter};
use crate::probe::{LinearProbe, ModelMeta, ProbeMode, ProbeModel};
use crate::training::{TrainConfig, TrainReport};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "spectral-probe-checkpoint";

/// Outcome of the training run that produced a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_completed: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

impl From<&TrainReport> for TrainSummary {
    fn from(r: &TrainReport) -> Self {
        TrainSummary {
            epochs_completed: r.epochs.len(),
            best_epoch: r.best_epoch,
            best_val_loss: r.best_val_loss,
            best_val_accuracy: r.best_val_accuracy,
            stopped_early: r.stopped_early,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ProbeModel,
    pub config: TrainConfig,
    pub summary: Option<TrainSummary>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ModeRecord {
    Orig,
    FixedBand { lo: usize, hi: usize },
    Auto { gamma: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    embed_dim: usize,
    classes: usize,
    /// Canonical filter length `M`; absent outside auto mode.
    filter_len: Option<usize>,
    mode: ModeRecord,
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
    meta: ModelMeta,
    config: TrainConfig,
    summary: Option<TrainSummary>,
}

fn corrupt(message: impl Into<String>) -> FormatError {
    FormatError::Corrupt {
        message: message.into(),
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let model = &self.model;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            embed_dim: model.embed_dim(),
            classes: model.classes(),
            filter_len: model.mode.filter().map(SpectralFilter::len),
            mode: match &model.mode {
                ProbeMode::Orig => ModeRecord::Orig,
                ProbeMode::FixedBand(b) => ModeRecord::FixedBand { lo: b.lo, hi: b.hi },
                ProbeMode::Auto(f) => ModeRecord::Auto { gamma: f.raw().to_vec() },
            },
            weight: model.probe.weight().outer_iter().map(|r| r.to_vec()).collect(),
            bias: model.probe.bias().to_vec(),
            meta: model.meta.clone(),
            config: self.config.clone(),
            summary: self.summary.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("checkpoint serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Err(corrupt("empty checkpoint"));
        }
        // Check the version before the full schema so old files get a clear error.
        let probe: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(corrupt("not a spectral-probe checkpoint"));
        }
        let version = probe
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("missing version"))?;
        if version != CHECKPOINT_VERSION as u64 {
            return Err(FormatError::VersionMismatch {
                found: version.min(u32::MAX as u64) as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let file: CheckpointFile = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;

        if file.weight.len() != file.embed_dim || file.weight.iter().any(|r| r.len() != file.classes) {
            return Err(corrupt("weight matrix does not match embed_dim x classes"));
        }
        let weight = Array2::from_shape_vec(
            (file.embed_dim, file.classes),
            file.weight.into_iter().flatten().collect(),
        )
        .map_err(|e| corrupt(e.to_string()))?;
        let probe = LinearProbe::new(weight, Array1::from(file.bias)).map_err(|e| corrupt(e.to_string()))?;
        let mode = match file.mode {
            ModeRecord::Orig => ProbeMode::Orig,
            ModeRecord::FixedBand { lo, hi } => {
                ProbeMode::FixedBand(FilterBand::new(lo, hi).map_err(|e| corrupt(e.to_string()))?)
            }
            ModeRecord::Auto { gamma } => {
                if file.filter_len != Some(gamma.len()) {
                    return Err(corrupt("filter_len does not match gamma length"));
                }
                ProbeMode::Auto(SpectralFilter::from_raw(gamma).map_err(|e| corrupt(e.to_string()))?)
            }
        };
        file.config.validate().map_err(|e| corrupt(e.to_string()))?;
        Ok(Checkpoint {
            model: ProbeModel {
                mode,
                probe,
                meta: file.meta,
            },
            config: file.config,
            summary: file.summary,
        })
    }
}

pub fn save_checkpoint(
    model: &ProbeModel,
    config: &TrainConfig,
    report: Option<&TrainReport>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let ckpt = Checkpoint {
        model: model.clone(),
        config: config.clone(),
        summary: report.map(TrainSummary::from),
    };
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn auto_checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let probe = LinearProbe::init(4, 3, &mut rng).unwrap();
        let gamma: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let model = ProbeModel::new(ProbeMode::Auto(SpectralFilter::from_raw(gamma).unwrap()), probe).with_meta(
            ModelMeta {
                task: "topic".into(),
                language: "en".into(),
            },
        );
        Checkpoint {
            model,
            config: TrainConfig::default(),
            summary: Some(TrainSummary {
                epochs_completed: 3,
                best_epoch: 2,
                best_val_loss: 0.123456789012345,
                best_val_accuracy: 0.9,
                stopped_early: true,
            }),
        }
    }

    #[test]
    fn round_trip_is_lossless_and_byte_exact() {
        let ckpt = auto_checkpoint();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);

        let fixed = Checkpoint {
            model: ProbeModel::new(ProbeMode::FixedBand(FilterBand::MID), ckpt.model.probe.clone()),
            config: TrainConfig::default(),
            summary: None,
        };
        assert_eq!(Checkpoint::from_bytes(&fixed.to_bytes()).unwrap(), fixed);
    }

    #[test]
    fn empty_and_garbage_payloads_are_corrupt() {
        assert!(matches!(Checkpoint::from_bytes(b""), Err(FormatError::Corrupt { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"{\"x\":"), Err(FormatError::Corrupt { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"[1,2]"), Err(FormatError::Corrupt { .. })));
    }

    #[test]
    fn other_versions_are_refused() {
        let text = String::from_utf8(auto_checkpoint().to_bytes()).unwrap();
        let bumped = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert_eq!(
            Checkpoint::from_bytes(bumped.as_bytes()).unwrap_err(),
            FormatError::VersionMismatch { found: 2, expected: 1 }
        );
    }

    #[test]
    fn shape_inconsistencies_are_corrupt() {
        let text = String::from_utf8(auto_checkpoint().to_bytes()).unwrap();
        let bad = text.replacen("\"embed_dim\": 4", "\"embed_dim\": 5", 1);
        assert!(matches!(Checkpoint::from_bytes(bad.as_bytes()), Err(FormatError::Corrupt { .. })));
        let bad = text.replacen("\"filter_len\": 16", "\"filter_len\": 15", 1);
        assert!(matches!(Checkpoint::from_bytes(bad.as_bytes()), Err(FormatError::Corrupt { .. })));
    }
}
