//! Spectral profiles and how much two of them agree.
//!
//! A profile is the sigmoid-scaled filter `σ(γ)` at the filter's own length
//! `M`. Two profiles of equal length are compared by their overlap
//! `100 * (1 - |a - b|_1 / M)`, a percentage where 100 means identical.

mod export;
mod svg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::probe::{ProbeMode, ProbeModel};

pub use export::{
    averaged_profile_csv, fmt_sig9, matrix_csv, profile_csv, write_averaged_profile_csv, write_matrix_csv, write_matrix_svg,
    write_profile_csv, write_profile_svg,
};
pub use svg::{matrix_svg, profile_svg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub weights: Vec<f64>,
    pub label: String,
    pub language: String,
}

impl SpectralProfile {
    /// Checks that every weight lies in `[0, 1]`.
    pub fn new(weights: Vec<f64>, label: impl Into<String>, language: impl Into<String>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("profile weights"));
        }
        if let Some(k) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidConfig(format!(
                "profile weight {} at frequency {k} is outside [0, 1]",
                weights[k]
            )));
        }
        Ok(SpectralProfile {
            weights,
            label: label.into(),
            language: language.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mean weight over the inclusive index range `lo..=hi`.
    pub fn band_mean(&self, lo: usize, hi: usize) -> f64 {
        let hi = hi.min(self.len() - 1);
        if lo > hi {
            return f64::NAN;
        }
        self.weights[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
    }

    /// Label used in matrices and plots: `task/language`, or whichever is set.
    pub fn display_label(&self) -> String {
        match (self.label.is_empty(), self.language.is_empty()) {
            (false, false) => format!("{}/{}", self.label, self.language),
            (false, true) => self.label.clone(),
            (true, false) => self.language.clone(),
            (true, true) => "profile".into(),
        }
    }
}

/// Learned profile of an auto-mode model, labelled from its metadata.
pub fn extract_profile(model: &ProbeModel) -> Result<SpectralProfile> {
    match &model.mode {
        ProbeMode::Auto(filter) => Ok(SpectralProfile {
            weights: filter.sigmoid_weights(),
            label: model.meta.task.clone(),
            language: model.meta.language.clone(),
        }),
        other => Err(Error::NoProfile {
            mode: other.name(),
        }),
    }
}

fn overlap_raw(a: &[f64], b: &[f64]) -> f64 {
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    100.0 * (1.0 - l1 / a.len() as f64)
}

/// Percentage overlap of two equal-length profiles.
pub fn overlap(a: &SpectralProfile, b: &SpectralProfile) -> Result<f64> {
    ensure_len("profile length", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Empty("profile weights"));
    }
    Ok(overlap_raw(&a.weights, &b.weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub labels: Vec<String>,
    /// Unrounded overlaps, row-major.
    pub values: Vec<Vec<f64>>,
}

impl OverlapMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// Entries rounded to whole percentages for display.
    pub fn rounded(&self) -> Vec<Vec<i64>> {
        self.values
            .iter()
            .map(|row| row.iter().map(|v| v.round() as i64).collect())
            .collect()
    }
}

pub fn overlap_matrix(profiles: &[SpectralProfile]) -> Result<OverlapMatrix> {
    if profiles.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "an overlap matrix needs at least 2 profiles, got {}",
            profiles.len()
        )));
    }
    let m = profiles[0].len();
    if m == 0 {
        return Err(Error::Empty("profile weights"));
    }
    for p in profiles {
        ensure_len("profile length", m, p.len())?;
    }
    let p = profiles.len();
    let values = (0..p)
        .into_par_iter()
        .map(|i| {
            (0..p)
                .map(|j| if i == j { 100.0 } else { overlap_raw(&profiles[i].weights, &profiles[j].weights) })
                .collect()
        })
        .collect();
    Ok(OverlapMatrix {
        labels: profiles.iter().map(SpectralProfile::display_label).collect(),
        values,
    })
}

/// Per-frequency mean of several profiles with the min/max envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedProfile {
    pub mean: SpectralProfile,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn average_profile(profiles: &[SpectralProfile]) -> Result<AveragedProfile> {
    let first = profiles.first().ok_or(Error::Empty("profile list"))?;
    let m = first.len();
    for p in profiles {
        ensure_len("profile length", m, p.len())?;
    }
    let mut mean = vec![0.0; m];
    let mut lower = first.weights.clone();
    let mut upper = first.weights.clone();
    for p in profiles {
        for (k, &w) in p.weights.iter().enumerate() {
            mean[k] += w;
            lower[k] = lower[k].min(w);
            upper[k] = upper[k].max(w);
        }
    }
    let count = profiles.len() as f64;
    for (k, v) in mean.iter_mut().enumerate() {
        // Rounding can push the mean a hair outside the envelope.
        *v = (*v / count).clamp(lower[k], upper[k]);
    }
    let same = |f: fn(&SpectralProfile) -> &String| {
        let v = f(first);
        if profiles.iter().all(|p| f(p) == v) {
            v.clone()
        } else {
            String::new()
        }
    };
    Ok(AveragedProfile {
        mean: SpectralProfile {
            weights: mean,
            label: same(|p| &p.label),
            language: same(|p| &p.language),
        },
        lower,
        upper,
    })
}
