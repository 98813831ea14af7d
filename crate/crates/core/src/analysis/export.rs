//! CSV and SVG files for profiles and overlap matrices.

use std::fs;
use std::path::Path;

use super::{svg, AveragedProfile, OverlapMatrix, SpectralProfile};
use crate::error::{Error, Result};

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// scientific notation outside `1e-4 <= |v| < 1e9`.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `k,weight` header followed by one row per frequency.
pub fn profile_csv(profile: &SpectralProfile) -> String {
    let mut out = String::from("k,weight\n");
    for (k, w) in profile.weights.iter().enumerate() {
        out.push_str(&format!("{k},{}\n", fmt_sig9(*w)));
    }
    out
}

/// Same as [`profile_csv`] with the envelope as two extra columns.
pub fn averaged_profile_csv(avg: &AveragedProfile) -> String {
    let mut out = String::from("k,weight,lower,upper\n");
    for (k, w) in avg.mean.weights.iter().enumerate() {
        out.push_str(&format!(
            "{k},{},{},{}\n",
            fmt_sig9(*w),
            fmt_sig9(avg.lower[k]),
            fmt_sig9(avg.upper[k])
        ));
    }
    out
}

/// Header row with an empty corner cell and the labels, then one labelled row
/// per profile. `raw` selects unrounded values over whole percentages.
pub fn matrix_csv(matrix: &OverlapMatrix, raw: bool) -> String {
    let mut out = String::new();
    out.push_str("label");
    for l in &matrix.labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    let rounded = matrix.rounded();
    for ((label, values), whole) in matrix.labels.iter().zip(&matrix.values).zip(&rounded) {
        out.push_str(&csv_field(label));
        for (v, r) in values.iter().zip(whole) {
            out.push(',');
            if raw {
                out.push_str(&fmt_sig9(*v));
            } else {
                out.push_str(&r.to_string());
            }
        }
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_profile_csv(profile: &SpectralProfile, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &profile_csv(profile))
}

pub fn write_averaged_profile_csv(avg: &AveragedProfile, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &averaged_profile_csv(avg))
}

pub fn write_matrix_csv(matrix: &OverlapMatrix, raw: bool, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &matrix_csv(matrix, raw))
}

pub fn write_profile_svg(profiles: &[SpectralProfile], envelope: Option<(&[f64], &[f64])>, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &svg::profile_svg(profiles, envelope))
}

pub fn write_matrix_svg(matrix: &OverlapMatrix, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &svg::matrix_svg(matrix))
}
