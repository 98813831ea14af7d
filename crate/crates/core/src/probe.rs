//! Linear probe over (optionally) spectrally filtered embeddings.
//!
//! The pipeline for one sequence `x` (`N x E`) is
//!
//! ```text
//! C = dct(x)                  N x E
//! F = idct(diag(w) C)         filtered embeddings
//! Z = F W + 1 b^T             N x C logits
//! L = mean_n -log softmax(Z_n)[y_n]
//! ```
//!
//! where `w` is a fixed band mask or the adapted learnable filter. Because the
//! transform is linear, `F W = idct(diag(w) (C W))`, so the auto mode only
//! ever transforms `N x C` matrices; the DCT of the frozen input is computed
//! once per sequence by [`ProbeModel::prepare`].
//!
//! With `G = (softmax(Z) - onehot(y)) / N` and `P = C W`:
//!
//! ```text
//! dL/dW   = C^T diag(w) dct(G)
//! dL/db   = column sums of G
//! dL/dw_k = sum_c dct(G)[k, c] * P[k, c]
//! ```
//!
//! and `dL/dgamma` follows from [`adapt_filter_backward`].

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::filters::{adapt_filter_backward, apply_filter, band_weights, FilterBand, SpectralFilter};
use crate::spectral::{check_matrix, dct_columns, idct_columns};

/// Affine map from `E`-dimensional embeddings to `C` class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearProbe {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        let (e, c) = weight.dim();
        if e == 0 {
            return Err(Error::Empty("probe input dimension"));
        }
        if c < 2 {
            return Err(Error::InvalidConfig(format!("a probe needs at least 2 classes, got {c}")));
        }
        ensure_len("bias length", c, bias.len())?;
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: "probe parameters".into(),
            });
        }
        Ok(LinearProbe { weight, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(embed_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        let limit = (6.0 / (embed_dim + classes) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((embed_dim, classes), || rng.random_range(-limit..limit));
        LinearProbe::new(weight, Array1::zeros(classes))
    }

    pub fn embed_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weight.ncols()
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weight, &mut self.bias)
    }

    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Which frequency treatment precedes the probe.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeMode {
    /// Unfiltered embeddings.
    Orig,
    /// Binary band mask.
    FixedBand(FilterBand),
    /// Jointly trained spectral filter.
    Auto(SpectralFilter),
}

impl ProbeMode {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeMode::Orig => "orig",
            ProbeMode::FixedBand(_) => "fixed-band",
            ProbeMode::Auto(_) => "auto",
        }
    }

    pub fn filter(&self) -> Option<&SpectralFilter> {
        match self {
            ProbeMode::Auto(f) => Some(f),
            _ => None,
        }
    }
}

/// Task and language labels carried alongside a model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub task: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub mode: ProbeMode,
    pub probe: LinearProbe,
    pub meta: ModelMeta,
}

/// Per-sequence inputs cached across training steps.
#[derive(Debug, Clone)]
pub struct Prepared {
    features: Features,
}

#[derive(Debug, Clone)]
enum Features {
    /// Embeddings the probe reads directly (orig, or already band-filtered).
    Direct(Array2<f64>),
    /// DCT coefficients of the embeddings, filtered per step.
    Spectrum(Array2<f64>),
}

impl Prepared {
    pub fn len(&self) -> usize {
        match &self.features {
            Features::Direct(x) | Features::Spectrum(x) => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradients of the loss for every trainable parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    /// `None` unless the model is in auto mode.
    pub gamma: Option<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ProbeModel) -> Self {
        Gradients {
            weight: Array2::zeros(model.probe.weight.raw_dim()),
            bias: Array1::zeros(model.probe.classes()),
            gamma: model.mode.filter().map(|f| vec![0.0; f.len()]),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.weight += &other.weight;
        self.bias += &other.bias;
        if let (Some(a), Some(b)) = (self.gamma.as_mut(), other.gamma.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weight *= factor;
        self.bias *= factor;
        if let Some(g) = self.gamma.as_mut() {
            g.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Loss and gradients of one sequence.
#[derive(Debug, Clone)]
pub struct SequenceLoss {
    /// Mean cross-entropy over the active positions (0 when none are active).
    pub loss: f64,
    /// Number of positions that contributed.
    pub active: usize,
    pub grads: Gradients,
}

impl ProbeModel {
    pub fn new(mode: ProbeMode, probe: LinearProbe) -> Self {
        ProbeModel {
            mode,
            probe,
            meta: ModelMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: ModelMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn embed_dim(&self) -> usize {
        self.probe.embed_dim()
    }

    pub fn classes(&self) -> usize {
        self.probe.classes()
    }

    /// Validates `emb` and computes the parameter-independent part of the
    /// forward pass.
    pub fn prepare(&self, emb: ArrayView2<'_, f64>) -> Result<Prepared> {
        ensure_len("embedding width", self.embed_dim(), emb.ncols())?;
        check_matrix(&emb)?;
        let features = match &self.mode {
            ProbeMode::Orig => Features::Direct(emb.to_owned()),
            ProbeMode::FixedBand(band) => {
                let coeffs = dct_columns(emb);
                let masked = apply_filter(coeffs.view(), &band_weights(*band, emb.nrows()))?;
                Features::Direct(idct_columns(masked.view()))
            }
            ProbeMode::Auto(_) => Features::Spectrum(dct_columns(emb)),
        };
        Ok(Prepared { features })
    }

    /// `N x C` logits for one sequence.
    pub fn forward(&self, emb: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let prepared = self.prepare(emb)?;
        Ok(self.forward_prepared(&prepared))
    }

    pub fn forward_prepared(&self, prepared: &Prepared) -> Array2<f64> {
        match &prepared.features {
            Features::Direct(x) => self.probe.affine(x.view()),
            Features::Spectrum(coeffs) => {
                let (_, logits) = self.spectral_forward(coeffs);
                logits
            }
        }
    }

    /// Returns the unfiltered projection `C W` alongside the logits.
    fn spectral_forward(&self, coeffs: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let filter = self.mode.filter().expect("spectrum features imply auto mode");
        let weights = filter.adapt(coeffs.nrows());
        let projected = coeffs.dot(&self.probe.weight);
        let mut filtered = projected.clone();
        for (mut row, &w) in filtered.axis_iter_mut(Axis(0)).zip(weights.as_slice()) {
            row *= w;
        }
        let logits = idct_columns(filtered.view()) + &self.probe.bias;
        (projected, logits)
    }

    pub fn loss_and_grads(
        &self,
        emb: ArrayView2<'_, f64>,
        labels: &[usize],
        ignore: Option<&[bool]>,
    ) -> Result<SequenceLoss> {
        let prepared = self.prepare(emb)?;
        self.loss_and_grads_prepared(&prepared, labels, ignore)
    }

    pub fn loss_and_grads_prepared(
        &self,
        prepared: &Prepared,
        labels: &[usize],
        ignore: Option<&[bool]>,
    ) -> Result<SequenceLoss> {
        let n = prepared.len();
        ensure_len("label count", n, labels.len())?;
        if let Some(mask) = ignore {
            ensure_len("ignore mask length", n, mask.len())?;
        }
        let classes = self.classes();
        let is_active = |i: usize| !ignore.is_some_and(|m| m[i]);
        for (i, &y) in labels.iter().enumerate() {
            if is_active(i) && y >= classes {
                return Err(Error::LabelOutOfRange {
                    position: i,
                    label: y,
                    classes,
                });
            }
        }
        let active = (0..n).filter(|&i| is_active(i)).count();
        if active == 0 {
            return Ok(SequenceLoss {
                loss: 0.0,
                active: 0,
                grads: Gradients::zeros_like(self),
            });
        }

        let (projected, logits) = match &prepared.features {
            Features::Direct(x) => (None, self.probe.affine(x.view())),
            Features::Spectrum(coeffs) => {
                let (p, z) = self.spectral_forward(coeffs);
                (Some(p), z)
            }
        };

        let inv = 1.0 / active as f64;
        let mut loss = 0.0;
        let mut g = Array2::<f64>::zeros((n, classes));
        for (i, (z, mut g_row)) in logits.axis_iter(Axis(0)).zip(g.axis_iter_mut(Axis(0))).enumerate() {
            if !is_active(i) {
                continue;
            }
            let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum.ln();
            loss += (log_norm - z[labels[i]]) * inv;
            for (c, slot) in g_row.iter_mut().enumerate() {
                *slot = (z[c] - log_norm).exp() * inv;
            }
            g_row[labels[i]] -= inv;
        }

        let bias = g.sum_axis(Axis(0));
        let grads = match (&prepared.features, projected) {
            (Features::Direct(x), _) => Gradients {
                weight: x.t().dot(&g),
                bias,
                gamma: None,
            },
            (Features::Spectrum(coeffs), Some(projected)) => {
                let filter = self.mode.filter().expect("spectrum features imply auto mode");
                let weights = filter.adapt(n);
                let g_hat = dct_columns(g.view());
                let grad_w: Vec<f64> = g_hat
                    .axis_iter(Axis(0))
                    .zip(projected.axis_iter(Axis(0)))
                    .map(|(a, b)| a.dot(&b))
                    .collect();
                let mut weighted = g_hat;
                for (mut row, &w) in weighted.axis_iter_mut(Axis(0)).zip(weights.as_slice()) {
                    row *= w;
                }
                Gradients {
                    weight: coeffs.t().dot(&weighted),
                    bias,
                    gamma: Some(adapt_filter_backward(filter, n, &grad_w)?),
                }
            }
            (Features::Spectrum(_), None) => unreachable!("spectral forward always yields a projection"),
        };
        Ok(SequenceLoss { loss, active, grads })
    }

    /// Argmax class per position; ties go to the lowest class index.
    pub fn predict_prepared(&self, prepared: &Prepared) -> Vec<usize> {
        argmax_rows(&self.forward_prepared(prepared))
    }
}

pub(crate) fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect()
}

/// Position-level evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Accuracy restricted to positions of each gold class; `None` when the
    /// class never occurs.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub positions: usize,
    pub loss: f64,
}

/// Counts for one sequence: (correct, total, per-class correct, per-class total, summed loss).
struct Tally {
    correct: usize,
    total: usize,
    class_correct: Vec<usize>,
    class_total: Vec<usize>,
    loss_sum: f64,
}

pub fn evaluate(model: &ProbeModel, dataset: &Dataset) -> Result<EvalMetrics> {
    if dataset.sequences.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    ensure_len("dataset embedding width", model.embed_dim(), dataset.embed_dim)?;
    let classes = model.classes();
    let tallies: Vec<Tally> = dataset
        .sequences
        .par_iter()
        .map(|seq| -> Result<Tally> {
            let prepared = model.prepare(seq.values_f64().view())?;
            let logits = model.forward_prepared(&prepared);
            let predictions = argmax_rows(&logits);
            let mut t = Tally {
                correct: 0,
                total: 0,
                class_correct: vec![0; classes],
                class_total: vec![0; classes],
                loss_sum: 0.0,
            };
            for (i, (&pred, &gold)) in predictions.iter().zip(&seq.labels).enumerate() {
                if seq.ignore[i] {
                    continue;
                }
                let gold = gold as usize;
                if gold >= classes {
                    return Err(Error::LabelOutOfRange {
                        position: i,
                        label: gold,
                        classes,
                    });
                }
                let row = logits.row(i);
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                t.loss_sum += lse - row[gold];
                t.total += 1;
                t.class_total[gold] += 1;
                if pred == gold {
                    t.correct += 1;
                    t.class_correct[gold] += 1;
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;

    let mut correct = 0;
    let mut total = 0;
    let mut class_correct = vec![0; classes];
    let mut class_total = vec![0; classes];
    let mut loss_sum = 0.0;
    for t in &tallies {
        correct += t.correct;
        total += t.total;
        loss_sum += t.loss_sum;
        for c in 0..classes {
            class_correct[c] += t.class_correct[c];
            class_total[c] += t.class_total[c];
        }
    }
    if total == 0 {
        return Err(Error::Empty("set of evaluated (non-ignored) positions"));
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / total as f64,
        per_class_accuracy: class_correct
            .iter()
            .zip(&class_total)
            .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
            .collect(),
        positions: total,
        loss: loss_sum / total as f64,
    })
}

/// Fraction of non-ignored positions whose argmax matches the label.
pub fn predict_accuracy(model: &ProbeModel, dataset: &Dataset) -> Result<f64> {
    evaluate(model, dataset).map(|m| m.accuracy)
}
