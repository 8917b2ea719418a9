//! Rank penalties built from `S(r)²`.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::kyfan::SkfTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    /// `K·S(r)²`, multiplied by σ² in the known-variance criterion.
    KnownVariance,
    /// `K·S(r)² / (1 − (1 + K·S(r)²)/(nm))` for the multiplicative
    /// unknown-variance criterion.
    UnknownVariancePrime,
    /// `−log(1 − K·S(r)²/(nm − 1))` for the log-RSS form of the same criterion.
    UnknownVarianceLog,
    /// `K·S(r)² / (1 − K·S(r)²/(nm))`, the below-minimal penalty used only to
    /// exhibit overfitting.
    SubMinimalPrime,
    /// `λ·(n + q)·r`.
    RscLinear,
}

/// Penalty values indexed by rank, `values[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTable {
    pub kind: PenaltyKind,
    /// `K`, or `λ` for [`PenaltyKind::RscLinear`].
    pub constant: f64,
    pub q: usize,
    pub n: usize,
    /// Sample size; absent for penalties that do not involve it.
    pub m: Option<usize>,
    pub values: Vec<f64>,
}

impl PenaltyTable {
    pub fn r_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, r: usize) -> Result<f64> {
        self.values.get(r).copied().ok_or_else(|| {
            Error::Argument(format!(
                "rank {r} outside penalty range 0..={}",
                self.r_max()
            ))
        })
    }

    pub(crate) fn nm(&self) -> Result<f64> {
        match self.m {
            Some(m) => Ok((self.n * m) as f64),
            None => arg_err("penalty table carries no sample size"),
        }
    }
}

fn check_r_max(skf: &SkfTable, r_max: usize) -> Result<()> {
    if r_max == 0 || r_max > skf.max_rank() {
        return arg_err(format!("r_max {r_max} outside 1..={}", skf.max_rank()));
    }
    Ok(())
}

/// `K·S(r)²` for `r = 0..=min(q,n)`.
///
/// `K ≤ 1` falls below the minimal penalty and makes the known-variance
/// criterion overfit; it is refused unless `allow_minimal_violation` is set.
pub fn pen_known(skf: &SkfTable, k: f64, allow_minimal_violation: bool) -> Result<PenaltyTable> {
    if !(k > 0.0) || !k.is_finite() {
        return arg_err(format!("K must be positive, got {k}"));
    }
    if k <= 1.0 && !allow_minimal_violation {
        return arg_err(format!(
            "K = {k} ≤ 1 is below the minimal penalty K·S(r)² (selection overfits); \
             pass allow-minimal-violation to run it anyway"
        ));
    }
    let values = (0..=skf.max_rank()).map(|r| k * skf.s2(r)).collect();
    Ok(PenaltyTable {
        kind: PenaltyKind::KnownVariance,
        constant: k,
        q: skf.q,
        n: skf.n,
        m: None,
        values,
    })
}

/// `pen′(r) = K·S(r)² / (1 − (1 + K·S(r)²)/(nm))` for `r = 0..=r_max`.
///
/// Requires `K·S(r_max)² + 1 < nm`; since `S` is increasing this covers
/// every smaller rank.
pub fn pen_prime(skf: &SkfTable, k: f64, m: usize, r_max: usize) -> Result<PenaltyTable> {
    if !(k > 1.0) || !k.is_finite() {
        return arg_err(format!("K must exceed 1, got {k}"));
    }
    check_r_max(skf, r_max)?;
    let nm = (skf.n * m) as f64;
    if let Some(r) = (1..=r_max).find(|&r| k * skf.s2(r) + 1.0 >= nm) {
        return Err(Error::Infeasible(format!(
            "K·S(r)² + 1 < nm fails at r = {r} (K·S² = {:.6}, nm = {nm}); lower r_max or K",
            k * skf.s2(r)
        )));
    }
    let values = (0..=r_max)
        .map(|r| {
            if r == 0 {
                return 0.0;
            }
            let ks2 = k * skf.s2(r);
            ks2 / (1.0 - (1.0 + ks2) / nm)
        })
        .collect();
    Ok(PenaltyTable {
        kind: PenaltyKind::UnknownVariancePrime,
        constant: k,
        q: skf.q,
        n: skf.n,
        m: Some(m),
        values,
    })
}

/// `pen(r) = −log(1 − K·S(r)²/(nm − 1))` for `r = 0..=r_max`.
pub fn pen_log(skf: &SkfTable, k: f64, m: usize, r_max: usize) -> Result<PenaltyTable> {
    if !(k > 1.0) || !k.is_finite() {
        return arg_err(format!("K must exceed 1, got {k}"));
    }
    check_r_max(skf, r_max)?;
    let nm1 = (skf.n * m) as f64 - 1.0;
    if let Some(r) = (1..=r_max).find(|&r| k * skf.s2(r) >= nm1) {
        return Err(Error::Infeasible(format!(
            "K·S(r)² < nm − 1 fails at r = {r}; the log penalty is undefined"
        )));
    }
    let values = (0..=r_max)
        .map(|r| -(-k * skf.s2(r) / nm1).ln_1p())
        .collect();
    Ok(PenaltyTable {
        kind: PenaltyKind::UnknownVarianceLog,
        constant: k,
        q: skf.q,
        n: skf.n,
        m: Some(m),
        values,
    })
}

/// `K·S(r)² / (1 − K·S(r)²/(nm))`: the unknown-variance penalty with the
/// `+1` dropped from the denominator, meant for `K < 1` overfitting runs.
pub fn pen_prime_sub_minimal(
    skf: &SkfTable,
    k: f64,
    m: usize,
    r_max: usize,
) -> Result<PenaltyTable> {
    if !(k > 0.0) || !k.is_finite() {
        return arg_err(format!("K must be positive, got {k}"));
    }
    check_r_max(skf, r_max)?;
    let nm = (skf.n * m) as f64;
    if let Some(r) = (1..=r_max).find(|&r| k * skf.s2(r) >= nm) {
        return Err(Error::Infeasible(format!("K·S(r)² < nm fails at r = {r}")));
    }
    let values = (0..=r_max)
        .map(|r| {
            let ks2 = k * skf.s2(r);
            ks2 / (1.0 - ks2 / nm)
        })
        .collect();
    Ok(PenaltyTable {
        kind: PenaltyKind::SubMinimalPrime,
        constant: k,
        q: skf.q,
        n: skf.n,
        m: Some(m),
        values,
    })
}

/// `λ·(n + q)·r` for `r = 0..=r_max`.
pub fn pen_rsc(lambda: f64, n: usize, rank_x: usize, r_max: usize) -> Result<PenaltyTable> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return arg_err(format!("lambda must be nonnegative, got {lambda}"));
    }
    let slope = lambda * (n + rank_x) as f64;
    Ok(PenaltyTable {
        kind: PenaltyKind::RscLinear,
        constant: lambda,
        q: rank_x,
        n,
        m: None,
        values: (0..=r_max).map(|r| slope * r as f64).collect(),
    })
}

/// Largest `r_max` allowed by `r_max ≤ α(nm − 1)/(K(√q + √n)²)`, capped at
/// `min(q, n)`.
pub fn r_max_default(q: usize, n: usize, m: usize, k: f64, alpha: f64) -> Result<usize> {
    if !(k > 1.0) {
        return arg_err(format!("K must exceed 1, got {k}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return arg_err(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if q == 0 || n == 0 || m == 0 {
        return Err(Error::Infeasible(format!(
            "penalty regime infeasible at q={q}, n={n}, m={m}"
        )));
    }
    let nm1 = (n * m) as f64 - 1.0;
    let denom = k * ((q as f64).sqrt() + (n as f64).sqrt()).powi(2);
    let bound = (alpha * nm1 / denom).floor();
    let r = (bound.max(0.0) as usize).min(q.min(n));
    if r < 1 {
        return Err(Error::Infeasible(format!(
            "penalty regime infeasible at these dimensions (q={q}, n={n}, m={m}, K={k}, alpha={alpha})"
        )));
    }
    Ok(r)
}
