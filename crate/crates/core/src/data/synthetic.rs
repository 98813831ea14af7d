//! Synthetic embedding sequences with planted frequency structure.
//!
//! Every sequence is built in the coefficient domain and materialized with
//! the inverse DCT:
//!
//! * **sequence-level**: class `y` places `A * 0.5^j * u_y` at the `j`-th
//!   frequency of the signal band, where `u_y` is a fixed unit direction per
//!   class. The label is repeated over all positions.
//! * **token-level**: each class owns a direction `v_c` and a random carrier
//!   `z_c` confined to the signal band; the coefficients are
//!   `A * sum_c z_c[k] v_c` and position `n` is labelled
//!   `argmax_c idct(z_c)[n]`. With two classes that is the sign of the
//!   difference carrier.
//!
//! Independent Gaussian noise fills the noise band. Amplitudes are set so that
//! the signal has unit RMS per embedding entry in the time domain and the
//! noise has RMS `1 / snr`.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, EmbeddingSequence, TaskKind};
use crate::error::{Error, Result};
use crate::filters::FilterBand;
use crate::probe::argmax_rows;
use crate::spectral::idct_columns;

const SIGNAL_DECAY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seq_len: usize,
    pub embed_dim: usize,
    pub classes: usize,
    pub count: usize,
    pub signal_band: FilterBand,
    pub noise_band: FilterBand,
    /// Time-domain RMS ratio of signal to noise; `f64::INFINITY` disables noise.
    pub snr: f64,
    pub kind: TaskKind,
    #[serde(default)]
    pub task: String,
    #[serde(default)]
    pub language: String,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.seq_len == 0 || self.embed_dim == 0 || self.count == 0 {
            return bad("sequence length, embedding width and count must be positive".into());
        }
        if self.classes < 2 || self.classes > u16::MAX as usize {
            return bad(format!("class count {} outside [2, {}]", self.classes, u16::MAX));
        }
        for (name, band) in [("signal", self.signal_band), ("noise", self.noise_band)] {
            if band.lo > band.hi || band.hi >= self.seq_len {
                return bad(format!(
                    "{name} band {}:{} does not fit a length-{} spectrum",
                    band.lo, band.hi, self.seq_len
                ));
            }
        }
        if self.signal_band.overlaps(&self.noise_band) {
            return bad(format!(
                "signal band {}:{} overlaps noise band {}:{}",
                self.signal_band.lo, self.signal_band.hi, self.noise_band.lo, self.noise_band.hi
            ));
        }
        if self.snr.is_nan() || self.snr <= 0.0 {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_simple_fn(dim, || rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Builds a dataset fully determined by `(spec, seed)`.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.seq_len;
    let e = spec.embed_dim;
    let directions: Vec<Array1<f64>> = (0..spec.classes).map(|_| unit_vector(&mut rng, e)).collect();

    let signal = spec.signal_band;
    let noise_sd = if spec.snr.is_infinite() {
        0.0
    } else {
        (n as f64 / (spec.snr * spec.snr * spec.noise_band.width() as f64)).sqrt()
    };
    // Total signal energy N * E gives unit RMS per entry.
    let total = (n * e) as f64;
    let seq_amp = (total / (0..signal.width()).map(|j| SIGNAL_DECAY.powi(2 * j as i32)).sum::<f64>()).sqrt();
    let tok_amp = (total / (signal.width() * spec.classes) as f64).sqrt();

    let mut sequences = Vec::with_capacity(spec.count);
    for idx in 0..spec.count {
        let mut coeffs = Array2::<f64>::zeros((n, e));
        let labels = match spec.kind {
            TaskKind::Sequence => {
                let y = idx % spec.classes;
                for (j, k) in (signal.lo..=signal.hi).enumerate() {
                    let amp = seq_amp * SIGNAL_DECAY.powi(j as i32);
                    coeffs.row_mut(k).scaled_add(amp, &directions[y]);
                }
                vec![y as u16; n]
            }
            TaskKind::Token => {
                let mut carriers = Array2::<f64>::zeros((n, spec.classes));
                for k in signal.lo..=signal.hi {
                    for c in 0..spec.classes {
                        let z: f64 = rng.sample(StandardNormal);
                        carriers[[k, c]] = z;
                        coeffs.row_mut(k).scaled_add(tok_amp * z, &directions[c]);
                    }
                }
                let in_time = idct_columns(carriers.view());
                argmax_rows(&in_time).into_iter().map(|c| c as u16).collect()
            }
        };
        for k in spec.noise_band.lo..=spec.noise_band.hi {
            for slot in coeffs.row_mut(k).iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *slot += noise_sd * z;
            }
        }
        let values = idct_columns(coeffs.view()).mapv(|v| v as f32);
        sequences.push(EmbeddingSequence::new(idx as u64, values, labels));
    }

    let mut meta = DatasetMeta {
        task: spec.task.clone(),
        language: spec.language.clone(),
        ..Default::default()
    };
    let mut generator = serde_json::to_value(spec).expect("spec serializes");
    if spec.snr.is_infinite() {
        // JSON has no infinity.
        generator["snr"] = serde_json::Value::String("inf".into());
    }
    generator["seed"] = seed.into();
    meta.extra.insert("generator".into(), generator);

    Ok(Dataset {
        sequences,
        classes: spec.classes,
        embed_dim: e,
        kind: spec.kind,
        meta,
    })
}

/// Between-class variance of each DCT coefficient, summed over embedding
/// dimensions; one entry per frequency. Sequence-level datasets only.
pub fn between_class_energy(dataset: &Dataset) -> Vec<f64> {
    let n = dataset.sequences.first().map_or(0, |s| s.len());
    let e = dataset.embed_dim;
    let mut sums = vec![Array2::<f64>::zeros((n, e)); dataset.classes];
    let mut counts = vec![0usize; dataset.classes];
    for seq in &dataset.sequences {
        let y = seq.labels[0] as usize;
        sums[y] += &crate::spectral::dct_columns(seq.values_f64().view());
        counts[y] += 1;
    }
    let total: usize = counts.iter().sum();
    let grand = sums.iter().fold(Array2::<f64>::zeros((n, e)), |acc, s| acc + s) / total as f64;
    let mut energy = Array2::<f64>::zeros((n, e));
    for (sum, &count) in sums.iter().zip(&counts) {
        if count == 0 {
            continue;
        }
        let diff = sum / count as f64 - &grand;
        energy.scaled_add(count as f64 / total as f64, &(&diff * &diff));
    }
    energy.sum_axis(Axis(1)).to_vec()
}
