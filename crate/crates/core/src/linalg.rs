//! SVD helpers. Matrices are nalgebra; the decomposition itself is faer's.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Thin SVD with singular values in decreasing order.
///
/// `u` is `rows × k`, `v` is `cols × k`, `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

pub fn svd(a: &DMatrix<f64>) -> Result<SortedSvd> {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SortedSvd {
            u: DMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        });
    }
    check_finite(a)?;
    let dec = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    Ok(SortedSvd {
        u: DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| s[i]).collect(),
        v: DMatrix::from_fn(cols, k, |r, c| v[(r, order[c])]),
    })
}

/// Singular values only, decreasing. Non-finite input yields an empty vector.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows().min(a.ncols()) == 0 || check_finite(a).is_err() {
        return Vec::new();
    }
    let mut sv = to_faer(a).singular_values().unwrap_or_default();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Standard numerical-rank threshold `max(rows, cols) · σ₁ · ε`.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

/// Number of singular values strictly above `tol`.
pub fn count_above(singular_values: &[f64], tol: f64) -> usize {
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// Numerical rank with the default threshold.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&s1) if s1 > 0.0 => count_above(&sv, default_rank_tol(a.nrows(), a.ncols(), s1)),
        _ => 0,
    }
}

/// Squared Hilbert–Schmidt norm.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Rows of `a` picked by `idx`, in order.
pub fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |r, c| a[(idx[r], c)])
}
