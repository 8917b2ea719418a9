//! Expected Ky-Fan (2,r)-norms of Gaussian matrices.
//!
//! `S(r) = E‖G‖_(2,r)` for a `q × n` matrix `G` with i.i.d. N(0,1) entries,
//! where `‖G‖²_(2,r)` is the sum of the `r` largest squared singular values.
//! Every rank penalty in [`crate::selection`] is built from a table of these.

mod mp;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

pub use mp::{mp_density, mp_quantile, MpParams, QUAD_TOL};

use crate::error::{arg_err, Result};
use crate::io::fmt_sig12;
use crate::linalg;
use crate::rng;

pub const DEFAULT_NSIM: usize = 200;
pub const DEFAULT_EPS: f64 = 1e-9;
pub const DEFAULT_SEED: u64 = 0;
/// `auto` switches to the Marchenko–Pastur approximation above this `n·q`.
pub const AUTO_MP_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkfMethod {
    MonteCarlo,
    MarchenkoPastur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkfPolicy {
    #[default]
    Auto,
    MonteCarlo,
    MarchenkoPastur,
}

impl SkfPolicy {
    pub fn resolve(self, q: usize, n: usize) -> SkfMethod {
        match self {
            SkfPolicy::MonteCarlo => SkfMethod::MonteCarlo,
            SkfPolicy::MarchenkoPastur => SkfMethod::MarchenkoPastur,
            SkfPolicy::Auto if q.saturating_mul(n) > AUTO_MP_THRESHOLD => {
                SkfMethod::MarchenkoPastur
            }
            SkfPolicy::Auto => SkfMethod::MonteCarlo,
        }
    }
}

/// How to evaluate `S` tables wherever the selectors need one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkfOptions {
    pub policy: SkfPolicy,
    pub nsim: usize,
    pub seed: u64,
    pub eps: f64,
}

impl Default for SkfOptions {
    fn default() -> Self {
        Self {
            policy: SkfPolicy::Auto,
            nsim: DEFAULT_NSIM,
            seed: DEFAULT_SEED,
            eps: DEFAULT_EPS,
        }
    }
}

/// `S(r)` for `r = 1..=min(q,n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkfTable {
    pub q: usize,
    pub n: usize,
    pub method: SkfMethod,
    /// `values[r-1] = S(r)`.
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nsim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    /// Standard error of each Monte Carlo mean.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_errors: Option<Vec<f64>>,
}

impl SkfTable {
    pub fn max_rank(&self) -> usize {
        self.values.len()
    }

    /// `S(r)`, with `S(0) = 0`.
    pub fn s(&self, r: usize) -> f64 {
        if r == 0 {
            0.0
        } else {
            self.values[r - 1]
        }
    }

    /// `S(r)²`, with `S(0)² = 0`.
    pub fn s2(&self, r: usize) -> f64 {
        let s = self.s(r);
        s * s
    }

    /// Standard error of `S(r)²` by the delta method (`2·S·se(S)`), or 0 for
    /// deterministic tables.
    pub fn s2_std_error(&self, r: usize) -> f64 {
        match &self.std_errors {
            Some(se) if r >= 1 => 2.0 * self.values[r - 1] * se[r - 1],
            _ => 0.0,
        }
    }

    /// Two-column CSV `r,s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,s\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, fmt_sig12(*v));
        }
        out
    }
}

fn check_dims(q: usize, n: usize) -> Result<()> {
    if q == 0 || n == 0 {
        return arg_err(format!("dimensions must be positive, got q={q}, n={n}"));
    }
    Ok(())
}

fn replicate_norms(q: usize, n: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[index as u64]);
    let g = rng::gaussian_matrix(&mut rng, q, n);
    let mut acc = 0.0;
    linalg::singular_values(&g)
        .into_iter()
        .map(|s| {
            acc += s * s;
            acc.sqrt()
        })
        .collect()
}

/// Monte Carlo estimate of `S(r)`: mean over `nsim` Gaussian draws of the
/// Ky-Fan norm itself (the mean is taken on the root scale).
///
/// Replicate `i` draws from stream `i` of `seed`, so the table does not
/// depend on how replicates are scheduled.
pub fn skf_monte_carlo(q: usize, n: usize, nsim: usize, seed: u64) -> Result<SkfTable> {
    check_dims(q, n)?;
    if nsim == 0 {
        return arg_err("nsim must be positive");
    }
    let k = q.min(n);

    #[cfg(feature = "parallel")]
    let draws: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..nsim)
            .into_par_iter()
            .map(|i| replicate_norms(q, n, seed, i))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<Vec<f64>> = (0..nsim).map(|i| replicate_norms(q, n, seed, i)).collect();

    let mut mean = vec![0.0; k];
    for d in &draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v;
        }
    }
    let nf = nsim as f64;
    mean.iter_mut().for_each(|m| *m /= nf);

    let std_errors = if nsim > 1 {
        let mut ss = vec![0.0; k];
        for d in &draws {
            for ((s, v), m) in ss.iter_mut().zip(d).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        ss.iter()
            .map(|s| (s / (nf - 1.0)).sqrt() / nf.sqrt())
            .collect()
    } else {
        vec![0.0; k]
    };

    Ok(SkfTable {
        q,
        n,
        method: SkfMethod::MonteCarlo,
        values: mean,
        nsim: Some(nsim),
        seed: Some(seed),
        eps: None,
        std_errors: Some(std_errors),
    })
}

/// Marchenko–Pastur approximation
/// `S(r)² ≈ nq ∫_{x_α}^{(1+√β)²} x f_β(x) dx` with `α = r / min(q,n)`.
pub fn skf_marchenko_pastur(q: usize, n: usize, eps: f64) -> Result<SkfTable> {
    check_dims(q, n)?;
    let law = MpParams::for_dims(q, n)?;
    let k = q.min(n);
    let nq = (n as f64) * (q as f64);
    let values = (1..=k)
        .map(|r| {
            let x = law.quantile(r as f64 / k as f64, eps)?;
            Ok((nq * law.upper_partial_moment(x)).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SkfTable {
        q,
        n,
        method: SkfMethod::MarchenkoPastur,
        values,
        nsim: None,
        seed: None,
        eps: Some(eps),
        std_errors: None,
    })
}

/// Analytic envelope `(lower, upper)` on `S(r)²`.
pub fn skf_bounds(q: usize, n: usize, r: usize) -> Result<(f64, f64)> {
    check_dims(q, n)?;
    let (q, n) = if q <= n { (q, n) } else { (n, q) };
    if r == 0 || r > q {
        return arg_err(format!("rank {r} outside 1..={q}"));
    }
    let (qf, nf, rf) = (q as f64, n as f64, r as f64);
    let lower = rf * (nf - 1.0 / qf);
    let linear = rf * (nf.sqrt() + qf.sqrt()).powi(2);
    let tail: f64 = (r + 1..=q)
        .map(|k| (nf.sqrt() - (k as f64).sqrt()).powi(2))
        .sum();
    let head: f64 = (1..=r)
        .map(|k| (nf.sqrt() + ((q - k + 1) as f64).sqrt()).powi(2))
        .sum();
    let upper = linear.min(nf * qf - tail).min(rf + head);
    Ok((lower, upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    q: usize,
    n: usize,
    policy: SkfPolicy,
    nsim: usize,
    seed: u64,
    eps_bits: u64,
}

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<SkfTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<SkfTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Table for `(q, n)` under `opts`, memoized process-wide.
pub fn skf_auto(q: usize, n: usize, opts: &SkfOptions) -> Result<Arc<SkfTable>> {
    check_dims(q, n)?;
    let key = CacheKey {
        q,
        n,
        policy: opts.policy,
        nsim: opts.nsim,
        seed: opts.seed,
        eps_bits: opts.eps.to_bits(),
    };
    if let Some(t) = cache().lock().expect("skf cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let table = match opts.policy.resolve(q, n) {
        SkfMethod::MonteCarlo => skf_monte_carlo(q, n, opts.nsim, opts.seed)?,
        SkfMethod::MarchenkoPastur => skf_marchenko_pastur(q, n, opts.eps)?,
    };
    let table = Arc::new(table);
    cache()
        .lock()
        .expect("skf cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&table));
    Ok(table)
}
