//! Synthetic experiments: correlated Gaussian designs, planted low-rank
//! coefficients, and replicated comparisons of rank selectors.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::kyfan::SkfOptions;
use crate::linalg::norm2;
use crate::reduced_rank::{fit_path, FitPath, RankTol};
use crate::rng;
use crate::selection::{
    cv_select_k, parse_grid, CvMethod, Selector, DEFAULT_ALPHA, DEFAULT_FOLDS, DEFAULT_K,
};

/// Ratios are truncated at this value.
pub const RATIO_CAP: f64 = 10.0;

const TAG_DESIGN: u64 = 1;
const TAG_COEF: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_CV: u64 = 4;

/// Lower Cholesky factor of the AR(1) covariance `Σ_ij = ρ^|i−j|`:
/// `L[i][0] = ρ^i`, `L[i][j] = ρ^(i−j)·√(1−ρ²)` for `1 ≤ j ≤ i`.
pub fn ar1_factor(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return arg_err(format!("|rho| must be below 1, got {rho}"));
    }
    let c = (1.0 - rho * rho).sqrt();
    Ok(DMatrix::from_fn(p, p, |i, j| match (i, j) {
        (i, j) if j > i => 0.0,
        (i, 0) => rho.powi(i as i32),
        (i, j) => rho.powi((i - j) as i32) * c,
    }))
}

/// `m × p` design whose rows are i.i.d. `N(0, Σ)`, `Σ_ij = ρ^|i−j|`.
pub fn gen_design(m: usize, p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    let l = ar1_factor(p, rho)?;
    let z = rng::gaussian_matrix(&mut rng::stream(seed, &[TAG_DESIGN]), m, p);
    if rho == 0.0 {
        return Ok(z);
    }
    Ok(z * l.transpose())
}

/// `A = b·B₁·B₂` with `B₁: p × r` and `B₂: r × n` standard Gaussian.
pub fn gen_coef(p: usize, n: usize, r: usize, b: f64, seed: u64) -> Result<DMatrix<f64>> {
    if r > p.min(n) {
        return arg_err(format!("rank {r} exceeds min(p, n) = {}", p.min(n)));
    }
    if !b.is_finite() {
        return arg_err(format!("b must be finite, got {b}"));
    }
    let mut g = rng::stream(seed, &[TAG_COEF]);
    let b1 = rng::gaussian_matrix(&mut g, p, r);
    let b2 = rng::gaussian_matrix(&mut g, r, n);
    Ok(b1 * b2 * b)
}

/// `Y = XA + σE`.
pub fn gen_response(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    sigma: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if x.ncols() != a.nrows() {
        return arg_err(format!(
            "X is {}×{} but A is {}×{}",
            x.nrows(),
            x.ncols(),
            a.nrows(),
            a.ncols()
        ));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return arg_err(format!(
            "sigma must be a finite nonnegative number, got {sigma}"
        ));
    }
    let xa = x * a;
    if sigma == 0.0 {
        return Ok(xa);
    }
    let e = rng::gaussian_matrix(&mut rng::stream(seed, &[TAG_NOISE]), xa.nrows(), xa.ncols());
    Ok(xa + e * sigma)
}

/// `min(‖XA − XÂ‖² / ‖XA − XÂ_oracle‖², 10)`, or `None` when the oracle
/// error is exactly zero.
pub fn ratio_metric(
    xa_hat: &DMatrix<f64>,
    xa_oracle: &DMatrix<f64>,
    xa_true: &DMatrix<f64>,
) -> Result<Option<f64>> {
    if xa_hat.shape() != xa_true.shape() || xa_oracle.shape() != xa_true.shape() {
        return arg_err("ratio_metric needs matrices of one shape");
    }
    let den = norm2(&(xa_true - xa_oracle));
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some((norm2(&(xa_true - xa_hat)) / den).min(RATIO_CAP)))
}

/// Either an explicit list or a `start:stop:step` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range(String),
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::List(v) if v.is_empty() => arg_err("empty grid"),
            GridSpec::List(v) => Ok(v.clone()),
            GridSpec::Range(s) => parse_grid(s),
        }
    }
}

/// Default λ grid for RSC cross-validation: 25 log-spaced values on [0.01, 100].
pub fn default_lambda_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-2.0 + i as f64 / 6.0)).collect()
}

fn default_k() -> f64 {
    DEFAULT_K
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Kf {
        #[serde(rename = "K", default = "default_k")]
        k: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    /// Known-variance criterion using the configured `σ²`.
    KfKnown {
        #[serde(rename = "K", default = "default_k")]
        k: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    Rsc {
        lambda: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    Rsci {
        #[serde(rename = "K", default = "default_k")]
        k: f64,
        #[serde(default)]
        r_max: Option<usize>,
    },
    KfCv {
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
    RsciCv {
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
    RscCv {
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
}

impl EstimatorSpec {
    /// Display name such as `KF[K=2]` or `RSC[λ=CV]`.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Kf { k, .. } => format!("KF[K={k}]"),
            EstimatorSpec::KfKnown { k, .. } => format!("KF-known[K={k}]"),
            EstimatorSpec::Rsc { lambda, .. } => format!("RSC[λ={lambda}]"),
            EstimatorSpec::Rsci { k, .. } => format!("RSCI[K={k}]"),
            EstimatorSpec::KfCv { .. } => "KF[K=CV]".into(),
            EstimatorSpec::RsciCv { .. } => "RSCI[K=CV]".into(),
            EstimatorSpec::RscCv { .. } => "RSC[λ=CV]".into(),
        }
    }

    fn cv(&self) -> Option<(CvMethod, &Option<GridSpec>, usize)> {
        match self {
            EstimatorSpec::KfCv { grid, folds } => Some((CvMethod::Kf, grid, *folds)),
            EstimatorSpec::RsciCv { grid, folds } => Some((CvMethod::Rsci, grid, *folds)),
            EstimatorSpec::RscCv { grid, folds } => Some((CvMethod::Rsc, grid, *folds)),
            _ => None,
        }
    }

    fn grid(&self) -> Result<Option<Vec<f64>>> {
        match self.cv() {
            None => Ok(None),
            Some((_, Some(g), _)) => g.values().map(Some),
            Some((CvMethod::Rsc, None, _)) => Ok(Some(default_lambda_grid())),
            Some((method, None, _)) => Ok(Some(method.default_grid())),
        }
    }

    /// Selected rank on one replicate.
    fn select(&self, data: &Replicate, grid: Option<&[f64]>, skf: &SkfOptions) -> Result<usize> {
        let sigma2 = data.sigma2;
        let selector = match *self {
            EstimatorSpec::Kf { k, alpha, r_max } => Selector::Kf { k, alpha, r_max },
            EstimatorSpec::KfKnown { k, r_max } => Selector::KfKnown { k, sigma2, r_max },
            EstimatorSpec::Rsc { lambda, r_max } => Selector::Rsc { lambda, r_max },
            EstimatorSpec::Rsci { k, r_max } => Selector::Rsci { k, r_max },
            _ => {
                let (method, _, folds) = self.cv().expect("cv estimator");
                let grid = grid.expect("grid resolved up front");
                return Ok(
                    cv_select_k(data.x, data.y, method, grid, folds, data.cv_seed, skf)?
                        .report
                        .r_hat,
                );
            }
        };
        Ok(selector.select(data.path, skf)?.r_hat)
    }
}

/// One simulated data set as seen by the estimators.
struct Replicate<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    path: &'a FitPath,
    sigma2: f64,
    cv_seed: u64,
}

/// Scalar or list, for the `rho` and `b` fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub r_true: usize,
    /// One value or a list; every `(rho, b)` pair is a cell.
    #[serde(deserialize_with = "one_or_many")]
    pub rho: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub b: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub skf: SkfOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.p == 0 || self.n == 0 {
            return arg_err("m, p and n must be positive");
        }
        if self.r_true == 0 || self.r_true > self.n.min(self.p) {
            return arg_err(format!("r_true must lie in 1..={}", self.n.min(self.p)));
        }
        if self.rho.is_empty() || self.b.is_empty() {
            return arg_err("rho and b need at least one value");
        }
        if let Some(r) = self.rho.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return arg_err(format!("rho must lie in [0, 1), got {r}"));
        }
        if let Some(b) = self.b.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return arg_err(format!("b must be finite and nonnegative, got {b}"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return arg_err(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.replicates == 0 {
            return arg_err("replicates must be positive");
        }
        if self.estimators.is_empty() {
            return arg_err("no estimators configured");
        }
        for e in &self.estimators {
            e.grid()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.rho
            .iter()
            .flat_map(|&r| self.b.iter().map(move |&b| (r, b)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rho: f64,
    pub b: f64,
    pub replicate: usize,
    pub estimator: String,
    /// `null` when the oracle error vanished.
    pub ratio: Option<f64>,
    pub r_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub available: bool,
    /// Why the estimator could not run, when unavailable.
    pub reason: Option<String>,
    pub records: usize,
    pub flagged: usize,
    pub median: Option<f64>,
    pub q10: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub q90: Option<f64>,
    pub mean_r_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub rho: f64,
    pub b: f64,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl ExperimentResult {
    pub fn summary(&self, rho: f64, b: f64, estimator: &str) -> Option<&EstimatorSummary> {
        self.cells
            .iter()
            .find(|c| c.rho == rho && c.b == b)?
            .estimators
            .iter()
            .find(|e| e.estimator == estimator)
    }

    /// Long-format CSV `replicate,estimator,ratio,r_hat,rho,b`; flagged
    /// ratios are written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,estimator,ratio,r_hat,rho,b\n");
        for r in &self.records {
            let ratio = r.ratio.map_or("NA".to_string(), crate::io::fmt_sig12);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.replicate,
                r.estimator,
                ratio,
                r.r_hat,
                crate::io::fmt_sig12(r.rho),
                crate::io::fmt_sig12(r.b)
            );
        }
        out
    }
}

/// Linear-interpolation sample quantile (R's type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

enum Outcome {
    Ran { r_hat: usize, ratio: Option<f64> },
    Unavailable(String),
}

fn run_replicate(
    cfg: &ExperimentConfig,
    grids: &[Option<Vec<f64>>],
    cell: usize,
    rho: f64,
    b: f64,
    rep: usize,
) -> Result<Vec<Outcome>> {
    let seed = rng::stream_id(&[cfg.seed, cell as u64, rep as u64]);
    let x = gen_design(cfg.m, cfg.p, rho, seed)?;
    let a = gen_coef(cfg.p, cfg.n, cfg.r_true, b, seed)?;
    let y = gen_response(&x, &a, cfg.sigma, seed)?;
    let xa = &x * &a;
    let path = fit_path(&x, &y, RankTol::Auto)?;
    let oracle = path.fitted(cfg.r_true.min(path.max_rank()))?;
    let data = Replicate {
        x: &x,
        y: &y,
        path: &path,
        sigma2: cfg.sigma * cfg.sigma,
        cv_seed: rng::stream_id(&[seed, TAG_CV]),
    };

    cfg.estimators
        .iter()
        .zip(grids)
        .map(
            |(est, grid)| match est.select(&data, grid.as_deref(), &cfg.skf) {
                Ok(r_hat) => Ok(Outcome::Ran {
                    r_hat,
                    ratio: ratio_metric(&path.fitted(r_hat)?, &oracle, &xa)?,
                }),
                Err(e) if e.is_infeasibility() => Ok(Outcome::Unavailable(e.to_string())),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// Run every replicate of every `(rho, b)` cell and aggregate per estimator.
///
/// Replicate `i` of cell `c` draws from its own seed stream, so results do
/// not depend on scheduling. An estimator that is infeasible on a replicate
/// contributes no record there; if it never runs in a cell it is reported
/// unavailable.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let grids: Vec<Option<Vec<f64>>> = cfg
        .estimators
        .iter()
        .map(|e| e.grid())
        .collect::<Result<_>>()?;
    let labels: Vec<String> = cfg.estimators.iter().map(EstimatorSpec::label).collect();
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicates).map(move |r| (c, r)))
        .collect();

    let run = |&(c, r): &(usize, usize)| run_replicate(cfg, &grids, c, cells[c].0, cells[c].1, r);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Vec<Outcome>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Vec<Outcome>> = jobs.iter().map(run).collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut summaries = Vec::with_capacity(cells.len());
    for (c, &(rho, b)) in cells.iter().enumerate() {
        let cell_out = &outcomes[c * cfg.replicates..(c + 1) * cfg.replicates];
        let mut estimators = Vec::with_capacity(labels.len());
        for (e, label) in labels.iter().enumerate() {
            let mut ratios = Vec::new();
            let mut ranks = Vec::new();
            let mut flagged = 0;
            let mut reason = None;
            for (rep, out) in cell_out.iter().enumerate() {
                match &out[e] {
                    Outcome::Ran { r_hat, ratio } => {
                        records.push(ReplicateRecord {
                            rho,
                            b,
                            replicate: rep,
                            estimator: label.clone(),
                            ratio: *ratio,
                            r_hat: *r_hat,
                        });
                        ranks.push(*r_hat);
                        match ratio {
                            Some(v) => ratios.push(*v),
                            None => flagged += 1,
                        }
                    }
                    Outcome::Unavailable(why) => {
                        reason.get_or_insert_with(|| why.clone());
                    }
                }
            }
            ratios.sort_by(f64::total_cmp);
            let q = |p| quantile_sorted(&ratios, p);
            estimators.push(EstimatorSummary {
                estimator: label.clone(),
                available: !ranks.is_empty(),
                reason,
                records: ranks.len(),
                flagged,
                median: q(0.5),
                q10: q(0.1),
                q25: q(0.25),
                q75: q(0.75),
                q90: q(0.9),
                mean_r_hat: (!ranks.is_empty())
                    .then(|| ranks.iter().sum::<usize>() as f64 / ranks.len() as f64),
            });
        }
        summaries.push(CellSummary { rho, b, estimators });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        cells: summaries,
        records,
    })
}

/// Parse an experiment configuration from JSON.
pub fn parse_config(json: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(json).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
