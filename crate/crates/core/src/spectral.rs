//! Orthonormal DCT-II and its inverse along the time axis.
//!
//! Forward coefficients are
//!
//! ```text
//! X_k = s_k * sum_{n=0}^{N-1} x_n * cos(pi/N * (n + 1/2) * k)
//! s_0 = sqrt(1/N),  s_k = sqrt(2/N) for k >= 1
//! ```
//!
//! With this scaling the N x N transform matrix `D` is orthogonal, so the
//! inverse is `D^T` and `dct2` is the adjoint of `idct2`. Backpropagation
//! through an inverse transform is therefore a forward transform.
//!
//! Matrices are `N x E` with one embedding dimension per column; the
//! transform runs down each column independently.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

type MatrixCache = RwLock<HashMap<usize, Arc<Array2<f64>>>>;

fn cache() -> &'static MatrixCache {
    static CACHE: OnceLock<MatrixCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn build_matrix(n: usize) -> Array2<f64> {
    let dc = (1.0 / n as f64).sqrt();
    let ac = (2.0 / n as f64).sqrt();
    // cos(pi/N (i + 1/2) k) = cos(pi * m / 2N) with m = (2i + 1) k, reduced mod 4N
    // so large arguments never reach the libm range reduction.
    let period = 4 * n;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let m = ((2 * i + 1) * k) % period;
        let scale = if k == 0 { dc } else { ac };
        scale * (PI * m as f64 / (2 * n) as f64).cos()
    })
}

/// Returns the cached `N x N` orthonormal DCT-II matrix (row `k` = frequency).
///
/// The cache is process-wide and shared between threads.
pub fn transform_matrix(n: usize) -> Arc<Array2<f64>> {
    assert!(n > 0, "transform length must be positive");
    if let Some(m) = cache().read().unwrap().get(&n) {
        return Arc::clone(m);
    }
    let built = Arc::new(build_matrix(n));
    let mut guard = cache().write().unwrap();
    Arc::clone(guard.entry(n).or_insert(built))
}

fn check_vector(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("sequence"));
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite {
            location: format!("index {i}"),
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_matrix(a: &ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() == 0 {
        return Err(Error::Empty("sequence"));
    }
    for ((row, col), v) in a.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                location: format!("row {row}, column {col}"),
            });
        }
    }
    Ok(())
}

/// Forward orthonormal DCT-II of a single sequence.
pub fn dct2(x: &[f64]) -> Result<Vec<f64>> {
    check_vector(x)?;
    let d = transform_matrix(x.len());
    Ok(d.dot(&ArrayView1::from(x)).to_vec())
}

/// Inverse of [`dct2`] (an orthonormal DCT-III).
pub fn idct2(coeffs: &[f64]) -> Result<Vec<f64>> {
    check_vector(coeffs)?;
    let d = transform_matrix(coeffs.len());
    Ok(d.t().dot(&ArrayView1::from(coeffs)).to_vec())
}

/// Columnwise [`dct2`] of an `N x E` matrix.
pub fn dct2_matrix(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_matrix(&a)?;
    Ok(dct_columns(a))
}

/// Columnwise [`idct2`] of an `N x E` coefficient matrix.
pub fn idct2_matrix(coeffs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_matrix(&coeffs)?;
    Ok(idct_columns(coeffs))
}

pub(crate) fn dct_columns(a: ArrayView2<'_, f64>) -> Array2<f64> {
    transform_matrix(a.nrows()).dot(&a)
}

pub(crate) fn idct_columns(coeffs: ArrayView2<'_, f64>) -> Array2<f64> {
    transform_matrix(coeffs.nrows()).t().dot(&coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn constant_sequence_is_pure_dc() {
        close(&dct2(&[1.0; 4]).unwrap(), &[2.0, 0.0, 0.0, 0.0], 1e-12);
        close(&idct2(&[2.0, 0.0, 0.0, 0.0]).unwrap(), &[1.0; 4], 1e-12);
    }

    #[test]
    fn impulse_matches_hand_values() {
        // s_k * cos(pi k / 8)
        let got = dct2(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        close(&got, &[0.5, 0.653_281_482_438_188_3, 0.5, 0.270_598_050_073_098_5], 1e-12);
    }

    #[test]
    fn single_element_is_identity() {
        assert_eq!(dct2(&[-3.25]).unwrap(), vec![-3.25]);
        assert_eq!(idct2(&[7.5]).unwrap(), vec![7.5]);
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let err = dct2(&[0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(err.to_string().contains("index 1"), "{err}");
        assert!(idct2(&[f64::INFINITY]).is_err());
        assert!(dct2(&[]).is_err());
        let m = array![[0.0, 1.0], [2.0, f64::NEG_INFINITY]];
        let err = dct2_matrix(m.view()).unwrap_err();
        assert!(err.to_string().contains("row 1, column 1"), "{err}");
    }

    #[test]
    fn matrix_variant_is_columnwise() {
        let m = array![[1.0, 1.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let out = dct2_matrix(m.view()).unwrap();
        close(&out.column(0).to_vec(), &dct2(&[1.0; 4]).unwrap(), 1e-14);
        close(&out.column(1).to_vec(), &dct2(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1e-14);
        let zeros = Array2::<f64>::zeros((5, 3));
        assert_eq!(dct2_matrix(zeros.view()).unwrap(), zeros);
        assert_eq!(idct2_matrix(zeros.view()).unwrap(), zeros);
    }

    #[test]
    fn matrix_is_orthonormal_up_to_512() {
        for n in [1usize, 2, 3, 5, 16, 100, 257, 512] {
            let d = transform_matrix(n);
            let gram = d.t().dot(&*d);
            let worst = gram
                .indexed_iter()
                .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-10, "n={n}: {worst}");
        }
    }

    #[test]
    fn cache_hands_out_the_same_matrix() {
        let a = transform_matrix(33);
        let b = transform_matrix(33);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
