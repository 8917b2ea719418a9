//! V-fold cross-validation of the tuning constant of a selector.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{SelectionReport, Selector, DEFAULT_ALPHA};
use crate::error::{arg_err, Error, Result};
use crate::kyfan::SkfOptions;
use crate::linalg::{norm2, select_rows};
use crate::reduced_rank::{fit_path, FitPath, RankTol};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 10;
const CV_STREAM: u64 = 0x6376;

/// Which selector's constant is tuned: `K` for KF and RSCI, `λ` for RSC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvMethod {
    Kf,
    Rsci,
    Rsc,
}

impl CvMethod {
    pub fn selector(self, c: f64) -> Selector {
        match self {
            CvMethod::Kf => Selector::Kf {
                k: c,
                alpha: DEFAULT_ALPHA,
                r_max: None,
            },
            CvMethod::Rsci => Selector::Rsci { k: c, r_max: None },
            CvMethod::Rsc => Selector::Rsc {
                lambda: c,
                r_max: None,
            },
        }
    }

    /// Default grid `1.2, 1.4, …, 3.0` for the `K`-tuned methods.
    pub fn default_grid(self) -> Vec<f64> {
        (0..10).map(|i| round12(1.2 + 0.2 * i as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: CvMethod,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Summed held-out squared error per grid value; `null` when skipped.
    pub cv_error: Vec<Option<f64>>,
    /// Grid values that were infeasible on some training split.
    pub skipped: Vec<f64>,
    /// Chosen constant.
    pub chosen: f64,
    /// Selection on the full data with the chosen constant.
    pub report: SelectionReport,
}

fn round12(x: f64) -> f64 {
    format!("{x:.12e}").parse().unwrap_or(x)
}

/// Parse `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Argument(format!("'{s}' is not a number in grid '{text}'")))
    };
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return arg_err(format!("grid '{text}' must be start:stop:step"));
        }
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || b < a {
            return arg_err(format!("grid '{text}' needs step > 0 and stop ≥ start"));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize + 1;
        (0..count).map(|i| round12(a + h * i as f64)).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        return arg_err("empty grid");
    }
    Ok(grid)
}

/// Held-out rows of each fold: a seeded shuffle of `0..m` cut into `folds`
/// contiguous blocks whose sizes differ by at most one. Indices within a
/// fold are sorted.
pub fn fold_assignment(m: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return arg_err(format!("need at least 2 folds, got {folds}"));
    }
    if folds > m {
        return arg_err(format!("{folds} folds for only {m} rows"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(seed, &[CV_STREAM]));
    let (base, extra) = (m / folds, m % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut block = order[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    Ok(out)
}

struct Split {
    path: FitPath,
    x_test: DMatrix<f64>,
    y_test: DMatrix<f64>,
}

fn make_split(x: &DMatrix<f64>, y: &DMatrix<f64>, test: &[usize]) -> Result<Split> {
    let m = x.nrows();
    let mut is_test = vec![false; m];
    test.iter().for_each(|&i| is_test[i] = true);
    let train: Vec<usize> = (0..m).filter(|&i| !is_test[i]).collect();
    let path = fit_path(
        &select_rows(x, &train),
        &select_rows(y, &train),
        RankTol::Auto,
    )?;
    Ok(Split {
        path,
        x_test: select_rows(x, test),
        y_test: select_rows(y, test),
    })
}

fn held_out_error(split: &Split, sel: &Selector, skf: &SkfOptions) -> Result<f64> {
    let rep = sel.select(&split.path, skf)?;
    let coef = split.path.coefficients(rep.r_hat)?;
    Ok(norm2(&(&split.y_test - &split.x_test * coef)))
}

/// Pick the constant in `grid` with the smallest V-fold held-out prediction
/// error `Σ ‖Y_test − X_test Â_r̂‖²`, then reselect on all rows with it.
///
/// Each training split gets its own path, design rank and `S` table. A grid
/// value whose penalty is infeasible on any split is skipped with a warning;
/// ties go to the smaller value.
pub fn cv_select_k(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    method: CvMethod,
    grid: &[f64],
    folds: usize,
    seed: u64,
    skf: &SkfOptions,
) -> Result<CvReport> {
    if grid.is_empty() {
        return arg_err("empty grid");
    }
    if x.nrows() != y.nrows() {
        return arg_err(format!("X has {} rows but Y has {}", x.nrows(), y.nrows()));
    }
    let fold_rows = fold_assignment(x.nrows(), folds, seed)?;

    #[cfg(feature = "parallel")]
    let splits: Vec<Split> = {
        use rayon::prelude::*;
        fold_rows
            .par_iter()
            .map(|t| make_split(x, y, t))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let splits: Vec<Split> = fold_rows
        .iter()
        .map(|t| make_split(x, y, t))
        .collect::<Result<_>>()?;

    let mut cv_error = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for &c in grid {
        let sel = method.selector(c);
        let mut total = 0.0;
        let mut infeasible = None;
        for split in &splits {
            match held_out_error(split, &sel, skf) {
                Ok(e) => total += e,
                Err(e) if e.is_infeasibility() => {
                    infeasible = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match infeasible {
            Some(e) => {
                warn!("cross-validation skips {c}: {e}");
                skipped.push(c);
                cv_error.push(None);
            }
            None => cv_error.push(Some(total)),
        }
    }

    let mut best: Option<(f64, f64)> = None;
    for (&c, err) in grid.iter().zip(&cv_error) {
        if let Some(e) = *err {
            best = match best {
                Some((be, bc)) if e > be || (e == be && c >= bc) => Some((be, bc)),
                _ => Some((e, c)),
            };
        }
    }
    let (_, chosen) = best
        .ok_or_else(|| Error::Infeasible(format!("every grid value was infeasible: {grid:?}")))?;

    let full = fit_path(x, y, RankTol::Auto)?;
    let report = method.selector(chosen).select(&full, skf)?;
    Ok(CvReport {
        method,
        grid: grid.to_vec(),
        folds,
        seed,
        cv_error,
        skipped,
        chosen,
        report,
    })
}
