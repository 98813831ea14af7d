//! Frequency filters applied in the DCT coefficient domain.
//!
//! Two kinds exist: binary fixed bands over a contiguous index range, and the
//! learnable [`SpectralFilter`], whose raw logits live at a canonical length
//! `M` and are resampled to each sequence's length `n`:
//!
//! * `n == M`: the sigmoid weights as-is,
//! * `n < M`: adaptive mean pooling, output bin `i` averaging raw indices
//!   `floor(i*M/n) ..= ceil((i+1)*M/n) - 1`,
//! * `n > M`: piecewise-linear interpolation onto `n` evenly spaced points
//!   spanning `[0, M-1]`.
//!
//! The sigmoid is applied before resampling, so every applied weight stays in
//! `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Canonical filter length for BERT-style encoders.
pub const DEFAULT_FILTER_LEN: usize = 512;

/// Inclusive range of DCT frequency indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterBand {
    pub lo: usize,
    pub hi: usize,
}

impl FilterBand {
    pub const LOW: FilterBand = FilterBand { lo: 0, hi: 1 };
    pub const MID_LOW: FilterBand = FilterBand { lo: 2, hi: 8 };
    pub const MID: FilterBand = FilterBand { lo: 9, hi: 33 };
    pub const MID_HIGH: FilterBand = FilterBand { lo: 34, hi: 129 };
    pub const HIGH: FilterBand = FilterBand { lo: 130, hi: 511 };

    /// The five named bands, lowest first.
    pub const NAMED: [(&'static str, FilterBand); 5] = [
        ("low", Self::LOW),
        ("mid-low", Self::MID_LOW),
        ("mid", Self::MID),
        ("mid-high", Self::MID_HIGH),
        ("high", Self::HIGH),
    ];

    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidConfig(format!(
                "band lower bound {lo} exceeds upper bound {hi}"
            )));
        }
        Ok(FilterBand { lo, hi })
    }

    pub fn name(&self) -> Option<&'static str> {
        Self::NAMED
            .iter()
            .find(|(_, b)| b == self)
            .map(|(name, _)| *name)
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.lo..=self.hi).contains(&k)
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn overlaps(&self, other: &FilterBand) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

impl fmt::Display for FilterBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(name) => f.write_str(name),
            None => write!(f, "{}:{}", self.lo, self.hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown band '{0}' (expected one of: low, mid-low, mid, mid-high, high)")]
pub struct UnknownBand(pub String);

impl FromStr for FilterBand {
    type Err = UnknownBand;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::NAMED
            .iter()
            .find(|(name, _)| *name == s)
            .map(|(_, band)| *band)
            .ok_or_else(|| UnknownBand(s.to_string()))
    }
}

/// Per-frequency weights in `[0, 1]`, adapted to one sequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedFilterWeights(Vec<f64>);

impl AppliedFilterWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Binary mask: 1 on `[lo, min(hi, n-1)]`, 0 elsewhere.
pub fn band_weights(band: FilterBand, n: usize) -> AppliedFilterWeights {
    assert!(n > 0, "sequence length must be positive");
    if band.lo > n - 1 {
        log::warn!("band {band} lies entirely above a length-{n} spectrum; all weights are zero");
    }
    AppliedFilterWeights((0..n).map(|k| if band.contains(k) { 1.0 } else { 0.0 }).collect())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Learnable frequency weighting: raw logits of fixed length `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFilter {
    raw: Vec<f64>,
}

impl SpectralFilter {
    /// All-zero logits: a uniform 0.5 pass-through.
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("spectral filter"));
        }
        Ok(SpectralFilter { raw: vec![0.0; len] })
    }

    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty("spectral filter"));
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("filter logit {i}"),
            });
        }
        Ok(SpectralFilter { raw })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn sigmoid_weights(&self) -> Vec<f64> {
        self.raw.iter().map(|&g| sigmoid(g)).collect()
    }

    pub fn adapt(&self, n: usize) -> AppliedFilterWeights {
        adapt_filter(self, n)
    }
}

enum Resample {
    Identity,
    Pool,
    Interpolate,
}

fn resample_kind(m: usize, n: usize) -> Resample {
    use std::cmp::Ordering::*;
    match n.cmp(&m) {
        Equal => Resample::Identity,
        Less => Resample::Pool,
        Greater => Resample::Interpolate,
    }
}

fn pool_bin(i: usize, m: usize, n: usize) -> std::ops::Range<usize> {
    let start = i * m / n;
    let end = ((i + 1) * m).div_ceil(n);
    start..end
}

/// Left neighbour and right-hand weight of output point `i` on the `[0, M-1]` grid.
fn interp_point(i: usize, m: usize, n: usize) -> (usize, f64) {
    if m == 1 {
        return (0, 0.0);
    }
    let num = i * (m - 1);
    let j = num / (n - 1);
    let t = (num % (n - 1)) as f64 / (n - 1) as f64;
    (j, t)
}

/// Resamples `sigmoid(gamma)` to length `n`.
pub fn adapt_filter(filter: &SpectralFilter, n: usize) -> AppliedFilterWeights {
    assert!(n > 0, "sequence length must be positive");
    let s = filter.sigmoid_weights();
    let m = s.len();
    let out = match resample_kind(m, n) {
        Resample::Identity => s,
        Resample::Pool => (0..n)
            .map(|i| {
                let bin = pool_bin(i, m, n);
                let len = bin.len() as f64;
                s[bin].iter().sum::<f64>() / len
            })
            .collect(),
        Resample::Interpolate => (0..n)
            .map(|i| {
                let (j, t) = interp_point(i, m, n);
                if j + 1 >= m {
                    s[j]
                } else {
                    (1.0 - t) * s[j] + t * s[j + 1]
                }
            })
            .collect(),
    };
    AppliedFilterWeights(out)
}

/// Gradient of a loss with respect to the raw logits, given the gradient with
/// respect to the adapted weights.
pub fn adapt_filter_backward(filter: &SpectralFilter, n: usize, upstream: &[f64]) -> Result<Vec<f64>> {
    ensure_len("upstream gradient length", n, upstream.len())?;
    if let Some(i) = upstream.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("upstream gradient {i}"),
        });
    }
    let m = filter.len();
    let mut grad = vec![0.0; m];
    match resample_kind(m, n) {
        Resample::Identity => grad.copy_from_slice(upstream),
        Resample::Pool => {
            for (i, &g) in upstream.iter().enumerate() {
                let bin = pool_bin(i, m, n);
                let share = g / bin.len() as f64;
                for slot in &mut grad[bin] {
                    *slot += share;
                }
            }
        }
        Resample::Interpolate => {
            for (i, &g) in upstream.iter().enumerate() {
                let (j, t) = interp_point(i, m, n);
                if j + 1 >= m {
                    grad[j] += g;
                } else {
                    grad[j] += (1.0 - t) * g;
                    grad[j + 1] += t * g;
                }
            }
        }
    }
    for (slot, &gamma) in grad.iter_mut().zip(filter.raw()) {
        let s = sigmoid(gamma);
        *slot *= s * (1.0 - s);
    }
    Ok(grad)
}

/// Scales row `k` of an `N x E` coefficient matrix by `weights[k]`.
pub fn apply_filter(coeffs: ArrayView2<'_, f64>, weights: &AppliedFilterWeights) -> Result<Array2<f64>> {
    ensure_len("filter length", coeffs.nrows(), weights.len())?;
    let mut out = coeffs.to_owned();
    for (mut row, &w) in out.axis_iter_mut(Axis(0)).zip(weights.as_slice()) {
        row *= w;
    }
    Ok(out)
}
