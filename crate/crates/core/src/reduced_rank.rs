//! Rank-constrained least squares.
//!
//! With `P` the orthogonal projector onto `range(X)` and `PY = UΣVᵀ`, the
//! rank-`r` least-squares fit is `XÂ_r = (PY)_r = U Σ_r Vᵀ`, and
//! `Â_r = X⁺ (PY)_r`. One SVD of `PY` therefore yields every rank at once,
//! and the residuals decompose as
//! `‖Y − XÂ_r‖² = ‖Y − PY‖² + Σ_{k>r} σ_k(PY)²`.
//!
//! When several singular values of `PY` coincide the rank-`r` truncation is
//! not unique; the first `r` directions returned by the SVD are kept.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::linalg::{self, SortedSvd};

/// Singular-value threshold used for numerical ranks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankTol {
    /// `max(rows, cols) · σ₁ · ε`.
    #[default]
    Auto,
    Fixed(f64),
}

impl RankTol {
    fn threshold(self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match self {
            RankTol::Auto => linalg::default_rank_tol(rows, cols, sigma_max),
            RankTol::Fixed(t) => t,
        }
    }
}

/// Orthogonal projector onto `range(X)`, with the pseudo-inverse of `X`
/// formed from the same SVD.
#[derive(Debug, Clone)]
pub struct Projector {
    /// `m × m` matrix `P`.
    pub matrix: DMatrix<f64>,
    /// Numerical rank of `X`.
    pub rank: usize,
    /// Threshold that produced `rank`.
    pub tol: f64,
    /// Orthonormal basis of `range(X)`, `m × rank`.
    basis: DMatrix<f64>,
    /// `X⁺ = (XᵀX)⁺Xᵀ`, `p × m`.
    pinv: DMatrix<f64>,
}

impl Projector {
    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// `P·Y` computed through the basis, without forming `P·Y` by an `m × m` product.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * (self.basis.transpose() * y)
    }
}

pub fn projector(x: &DMatrix<f64>, tol: RankTol) -> Result<Projector> {
    let (m, p) = x.shape();
    if m == 0 || p == 0 {
        return arg_err(format!("design must be non-empty, got {m}×{p}"));
    }
    let SortedSvd {
        u,
        singular_values: sv,
        v,
    } = linalg::svd(x)?;
    let s1 = sv.first().copied().unwrap_or(0.0);
    let thr = tol.threshold(m, p, s1);
    let q = if s1 > 0.0 {
        linalg::count_above(&sv, thr)
    } else {
        0
    };

    let basis = u.columns(0, q).into_owned();
    let pinv = DMatrix::from_fn(p, m, |i, j| {
        (0..q).map(|k| v[(i, k)] * u[(j, k)] / sv[k]).sum()
    });
    Ok(Projector {
        matrix: &basis * basis.transpose(),
        rank: q,
        tol: thr,
        basis,
        pinv,
    })
}

/// Every rank-`r` least-squares fit of `Y` on `X`, `r = 0..=min(q, n)`.
#[derive(Debug, Clone)]
pub struct FitPath {
    m: usize,
    p: usize,
    n: usize,
    rank_x: usize,
    /// Left singular vectors of `PY`, `m × k`.
    u: DMatrix<f64>,
    /// Singular values of `PY`, decreasing, length `k = min(m, n)`.
    sv: Vec<f64>,
    /// Right singular vectors of `PY`, `n × k`.
    v: DMatrix<f64>,
    rss_base: f64,
    rss: Vec<f64>,
    q_eff: usize,
    pinv: DMatrix<f64>,
}

pub fn fit_path(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: RankTol) -> Result<FitPath> {
    let proj = projector(x, tol)?;
    fit_path_with(x, &proj, y)
}

/// As [`fit_path`] but reusing an existing projector for `x`.
pub fn fit_path_with(x: &DMatrix<f64>, proj: &Projector, y: &DMatrix<f64>) -> Result<FitPath> {
    let (m, p) = x.shape();
    if y.nrows() != m {
        return arg_err(format!("X has {m} rows but Y has {}", y.nrows()));
    }
    if proj.m() != m {
        return arg_err("projector does not match the design");
    }
    let n = y.ncols();
    if n == 0 {
        return arg_err("Y must have at least one column");
    }
    let py = proj.apply(y);
    let rss_base = linalg::norm2(&(y - &py));
    let SortedSvd {
        u,
        singular_values: sv,
        v,
    } = linalg::svd(&py)?;

    let max_rank = proj.rank.min(n);
    // rss[r] = rss_base + Σ_{k>r} σ_k², summed from the smallest term up
    let mut rss = vec![0.0; max_rank + 1];
    let mut tail: f64 = sv[max_rank.min(sv.len())..]
        .iter()
        .rev()
        .map(|s| s * s)
        .sum();
    rss[max_rank] = rss_base + tail;
    for r in (0..max_rank).rev() {
        tail += sv[r] * sv[r];
        rss[r] = rss_base + tail;
    }

    let q_eff = match sv.first() {
        Some(&s1) if s1 > 0.0 => {
            linalg::count_above(&sv, linalg::default_rank_tol(m, n, s1)).min(max_rank)
        }
        _ => 0,
    };

    Ok(FitPath {
        m,
        p,
        n,
        rank_x: proj.rank,
        u,
        sv,
        v,
        rss_base,
        rss,
        q_eff,
        pinv: proj.pinv.clone(),
    })
}

impl FitPath {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.p, self.n)
    }

    /// Numerical rank `q` of the design.
    pub fn rank_x(&self) -> usize {
        self.rank_x
    }

    /// Largest admissible rank, `min(q, n)`.
    pub fn max_rank(&self) -> usize {
        self.rss.len() - 1
    }

    /// Numerical rank of `PY`.
    pub fn q_eff(&self) -> usize {
        self.q_eff
    }

    /// Singular values of `PY`, decreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.sv
    }

    /// `‖Y − PY‖²`.
    pub fn rss_base(&self) -> f64 {
        self.rss_base
    }

    /// `rss[r] = ‖Y − XÂ_r‖²` for `r = 0..=max_rank`.
    pub fn rss(&self) -> &[f64] {
        &self.rss
    }

    pub fn rss_at(&self, r: usize) -> Result<f64> {
        self.check_rank(r)?;
        Ok(self.rss[r])
    }

    fn check_rank(&self, r: usize) -> Result<()> {
        if r > self.max_rank() {
            return arg_err(format!("rank {r} outside 0..={}", self.max_rank()));
        }
        Ok(())
    }

    /// `XÂ_r = (PY)_r`, `m × n`.
    pub fn fitted(&self, r: usize) -> Result<DMatrix<f64>> {
        self.check_rank(r)?;
        let mut us = self.u.columns(0, r).into_owned();
        for k in 0..r {
            us.column_mut(k).scale_mut(self.sv[k]);
        }
        Ok(us * self.v.columns(0, r).transpose())
    }

    /// `Â_r = X⁺ (PY)_r`, `p × n`, of rank at most `r`.
    pub fn coefficients(&self, r: usize) -> Result<DMatrix<f64>> {
        self.check_rank(r)?;
        let mut left = &self.pinv * self.u.columns(0, r);
        for k in 0..r {
            left.column_mut(k).scale_mut(self.sv[k]);
        }
        Ok(left * self.v.columns(0, r).transpose())
    }

    /// Unbiased noise variance `‖Y − PY‖² / (mn − qn)`.
    pub fn sigma_hat2(&self) -> Result<f64> {
        sigma_hat2_from_parts(self.rss_base, self.m, self.n, self.rank_x)
    }
}

pub(crate) fn sigma_hat2_from_parts(rss_base: f64, m: usize, n: usize, q: usize) -> Result<f64> {
    if q >= m {
        return Err(crate::Error::VarianceNotEstimable(format!(
            "design has full row rank (rank {q} = m = {m})"
        )));
    }
    Ok(rss_base / ((m * n - q * n) as f64))
}

/// `rss_at` as a free function.
pub fn rss_at(path: &FitPath, r: usize) -> Result<f64> {
    path.rss_at(r)
}

/// `coefficients` as a free function.
pub fn coefficients(path: &FitPath, r: usize) -> Result<DMatrix<f64>> {
    path.coefficients(r)
}
