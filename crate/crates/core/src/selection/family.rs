use nalgebra::DMatrix;

use super::{argmin, PenaltyTable};
use crate::error::{arg_err, Error, Result};
use crate::linalg;

/// One member of an arbitrary estimator family (e.g. a nuclear-norm path).
#[derive(Debug, Clone)]
pub struct FamilyCandidate {
    /// `p × n` coefficient matrix.
    pub coefficients: DMatrix<f64>,
    /// `X·coefficients`, `m × n`.
    pub fitted: DMatrix<f64>,
    /// `‖Y − fitted‖²`.
    pub rss: f64,
}

/// `rss · (1 + pen′(rank)/(nm))` for each candidate, with `rank` the
/// numerical rank of its coefficients.
pub fn family_criteria(candidates: &[FamilyCandidate], pen: &PenaltyTable) -> Result<Vec<f64>> {
    let nm = pen.nm()?;
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.coefficients.ncols() != pen.n || c.fitted.ncols() != pen.n {
                return arg_err(format!("candidate {i} does not have n = {} columns", pen.n));
            }
            let rank = linalg::numerical_rank(&c.coefficients);
            let p = pen.values.get(rank).copied().ok_or_else(|| {
                Error::Argument(format!(
                    "candidate {i} has rank {rank}, beyond the penalty range 0..={}",
                    pen.r_max()
                ))
            })?;
            Ok(c.rss * (1.0 + p / nm))
        })
        .collect()
}

/// Index of the candidate minimizing [`family_criteria`]; ties go to the
/// first index.
pub fn select_family(candidates: &[FamilyCandidate], pen: &PenaltyTable) -> Result<usize> {
    if candidates.is_empty() {
        return arg_err("no candidates");
    }
    let crit = family_criteria(candidates, pen)?;
    argmin(&crit).ok_or_else(|| Error::Numerical("family criterion is NaN everywhere".into()))
}
