//! Rank selection.
//!
//! Every selector takes the residual path `rss[r] = ‖Y − XÂ_r‖²` (as produced
//! by [`crate::reduced_rank::FitPath`]) and returns the minimizing rank,
//! breaking ties toward the smaller rank.
//!
//! Candidate sets: `{0..=r_max}` for the known-variance, RSC and RSCI
//! criteria; `{1..=r_max}` for the unknown-variance criterion.

mod cv;
mod family;
mod penalty;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cv::{cv_select_k, fold_assignment, parse_grid, CvMethod, CvReport, DEFAULT_FOLDS};
pub use family::{family_criteria, select_family, FamilyCandidate};
pub use penalty::{
    pen_known, pen_log, pen_prime, pen_prime_sub_minimal, pen_rsc, r_max_default, PenaltyKind,
    PenaltyTable,
};

use crate::error::{arg_err, Result};
use crate::kyfan::{skf_auto, SkfOptions};
use crate::reduced_rank::{sigma_hat2_from_parts, FitPath, Projector};

pub const DEFAULT_K: f64 = 2.0;
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "KF-known")]
    KfKnown,
    #[serde(rename = "KF")]
    Kf,
    #[serde(rename = "RSC")]
    Rsc,
    #[serde(rename = "RSCI")]
    Rsci,
    #[serde(rename = "family")]
    Family,
}

/// Outcome of one rank selection. Arrays are aligned on `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Method,
    pub r_hat: usize,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    pub sigma2: Option<f64>,
    pub r_max: usize,
    pub penalty_kind: PenaltyKind,
    pub r: Vec<usize>,
    pub rss: Vec<f64>,
    pub penalty: Vec<f64>,
    pub criterion: Vec<f64>,
    /// `log(rss) + log(1 + pen′/nm)` for the unknown-variance criterion;
    /// `null` where `rss = 0`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_criterion: Option<Vec<Option<f64>>>,
}

/// First index of the minimum; NaN never wins.
pub(crate) fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

fn check_rss(rss: &[f64], r_max: usize) -> Result<()> {
    if rss.len() <= r_max {
        return arg_err(format!(
            "rss path covers ranks 0..={} but r_max is {r_max}",
            rss.len().saturating_sub(1)
        ));
    }
    Ok(())
}

fn build_report(
    method: Method,
    first: usize,
    r_max: usize,
    rss: &[f64],
    pen: &PenaltyTable,
    criterion: impl Fn(usize) -> f64,
) -> Result<SelectionReport> {
    if first > r_max {
        return arg_err("empty candidate set");
    }
    check_rss(rss, r_max)?;
    if pen.r_max() < r_max {
        return arg_err(format!(
            "penalty covers ranks up to {} but r_max is {r_max}",
            pen.r_max()
        ));
    }
    let r: Vec<usize> = (first..=r_max).collect();
    let crit: Vec<f64> = r.iter().map(|&r| criterion(r)).collect();
    let best = argmin(&crit)
        .ok_or_else(|| crate::Error::Numerical("criterion is NaN everywhere".into()))?;
    Ok(SelectionReport {
        method,
        r_hat: r[best],
        k: None,
        lambda: None,
        sigma2: None,
        r_max,
        penalty_kind: pen.kind,
        rss: r.iter().map(|&i| rss[i]).collect(),
        penalty: r.iter().map(|&i| pen.values[i]).collect(),
        criterion: crit,
        r,
        log_criterion: None,
    })
}

/// Known variance: `argmin_{0≤r≤r_max} rss(r) + pen(r)·σ²`.
pub fn select_known_variance(
    rss: &[f64],
    pen: &PenaltyTable,
    sigma2: f64,
    r_max: usize,
) -> Result<SelectionReport> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return arg_err(format!("sigma2 must be positive, got {sigma2}"));
    }
    let mut rep = build_report(Method::KfKnown, 0, r_max, rss, pen, |r| {
        rss[r] + pen.values[r] * sigma2
    })?;
    rep.k = Some(pen.constant);
    rep.sigma2 = Some(sigma2);
    Ok(rep)
}

/// Unknown variance: `argmin_{1≤r≤r_max} rss(r)·(1 + pen′(r)/(nm))` with
/// `r_max` the last rank in the penalty table.
pub fn select_unknown_variance(rss: &[f64], pen_prime: &PenaltyTable) -> Result<SelectionReport> {
    let nm = pen_prime.nm()?;
    let r_max = pen_prime.r_max();
    let mut rep = build_report(Method::Kf, 1, r_max, rss, pen_prime, |r| {
        rss[r] * (1.0 + pen_prime.values[r] / nm)
    })?;
    rep.k = Some(pen_prime.constant);
    rep.log_criterion = Some(
        rep.r
            .iter()
            .map(|&r| (rss[r] > 0.0).then(|| rss[r].ln() + (pen_prime.values[r] / nm).ln_1p()))
            .collect(),
    );
    Ok(rep)
}

/// Rank selection criterion (RSC): `argmin_{0≤r≤r_max} rss(r) + λ(n + rank_x)·r`.
pub fn rsc_select(
    rss: &[f64],
    lambda: f64,
    n: usize,
    rank_x: usize,
    r_max: usize,
) -> Result<SelectionReport> {
    let pen = pen_rsc(lambda, n, rank_x, r_max)?;
    let mut rep = build_report(Method::Rsc, 0, r_max, rss, &pen, |r| rss[r] + pen.values[r])?;
    rep.lambda = Some(lambda);
    Ok(rep)
}

/// `‖Y − PY‖² / (mn − qn)`; needs `rank(X) < m`.
pub fn sigma_hat2(y: &DMatrix<f64>, proj: &Projector) -> Result<f64> {
    if y.nrows() != proj.m() {
        return arg_err(format!(
            "Y has {} rows, projector is {}×{}",
            y.nrows(),
            proj.m(),
            proj.m()
        ));
    }
    let resid = y - proj.apply(y);
    sigma_hat2_from_parts(resid.norm_squared(), y.nrows(), y.ncols(), proj.rank)
}

/// RSC with `λ = K·σ̂²`.
pub fn rsci_select(
    rss: &[f64],
    y: &DMatrix<f64>,
    proj: &Projector,
    k: f64,
    r_max: usize,
) -> Result<SelectionReport> {
    let s2 = sigma_hat2(y, proj)?;
    rsci_from_sigma2(rss, s2, k, y.ncols(), proj.rank, r_max)
}

fn rsci_from_sigma2(
    rss: &[f64],
    s2: f64,
    k: f64,
    n: usize,
    rank_x: usize,
    r_max: usize,
) -> Result<SelectionReport> {
    if !(k > 0.0) || !k.is_finite() {
        return arg_err(format!("K must be positive, got {k}"));
    }
    let mut rep = rsc_select(rss, k * s2, n, rank_x, r_max)?;
    rep.method = Method::Rsci;
    rep.k = Some(k);
    rep.sigma2 = Some(s2);
    Ok(rep)
}

/// A rank selector with all its tuning resolved, applied to a [`FitPath`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Selector {
    /// Known-variance criterion with `pen = K·S²`.
    KfKnown {
        #[serde(rename = "K")]
        k: f64,
        sigma2: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    /// Unknown-variance criterion with `pen′` at the feasibility bound.
    Kf {
        #[serde(rename = "K")]
        k: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    Rsc {
        lambda: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    Rsci {
        #[serde(rename = "K")]
        k: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Selector {
    /// Select a rank on `path`. `m` and `q` come from the path; `S` tables
    /// use the path's numerical design rank.
    pub fn select(&self, path: &FitPath, skf: &SkfOptions) -> Result<SelectionReport> {
        let (m, _, n) = path.dims();
        let q = path.rank_x();
        let max_rank = path.max_rank();
        let clamp = |r: Option<usize>| -> Result<usize> {
            match r {
                Some(r) if r > max_rank => {
                    arg_err(format!("r_max {r} exceeds min(q, n) = {max_rank}"))
                }
                Some(r) => Ok(r),
                None => Ok(max_rank),
            }
        };
        match *self {
            Selector::KfKnown { k, sigma2, r_max } => {
                let r_max = clamp(r_max)?;
                if max_rank == 0 {
                    return select_known_variance(path.rss(), &zero_penalty(q, n), sigma2, 0);
                }
                let table = skf_auto(q, n, skf)?;
                let pen = pen_known(&table, k, true)?;
                select_known_variance(path.rss(), &pen, sigma2, r_max)
            }
            Selector::Kf { k, alpha, r_max } => {
                if max_rank == 0 {
                    return Err(crate::Error::Infeasible(
                        "design has rank 0; no rank ≥ 1 to select".into(),
                    ));
                }
                let r_max = match r_max {
                    Some(r) => clamp(Some(r))?,
                    None => r_max_default(q, n, m, k, alpha)?,
                };
                let table = skf_auto(q, n, skf)?;
                let pen = pen_prime(&table, k, m, r_max)?;
                select_unknown_variance(path.rss(), &pen)
            }
            Selector::Rsc { lambda, r_max } => rsc_select(path.rss(), lambda, n, q, clamp(r_max)?),
            Selector::Rsci { k, r_max } => {
                let s2 = path.sigma_hat2()?;
                rsci_from_sigma2(path.rss(), s2, k, n, q, clamp(r_max)?)
            }
        }
    }

    /// Same selector with its tuning constant (`K` or `λ`) replaced.
    pub fn with_constant(&self, c: f64) -> Selector {
        match *self {
            Selector::KfKnown { sigma2, r_max, .. } => Selector::KfKnown {
                k: c,
                sigma2,
                r_max,
            },
            Selector::Kf { alpha, r_max, .. } => Selector::Kf { k: c, alpha, r_max },
            Selector::Rsc { r_max, .. } => Selector::Rsc { lambda: c, r_max },
            Selector::Rsci { r_max, .. } => Selector::Rsci { k: c, r_max },
        }
    }
}

fn zero_penalty(q: usize, n: usize) -> PenaltyTable {
    PenaltyTable {
        kind: PenaltyKind::KnownVariance,
        constant: 0.0,
        q,
        n,
        m: None,
        values: vec![0.0],
    }
}
