//! Browser bindings: Marchenko–Pastur density, the `S(r)²` profile with its
//! envelope, and a rank-selection explorer on simulated data.

use lowrank::kyfan::{skf_auto, skf_bounds, skf_marchenko_pastur, MpParams, SkfOptions, SkfPolicy};
use lowrank::reduced_rank::{fit_path, RankTol};
use lowrank::selection::{pen_prime, r_max_default, Selector};
use lowrank::simulation::{gen_coef, gen_design, gen_response, ratio_metric};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Density of the MP law with ratio `beta` at `points` evenly spaced
/// abscissae covering its support, plus the upper-tail quantile at `alpha`.
pub fn mp_curve(beta: f64, points: usize, alpha: f64) -> lowrank::Result<Value> {
    let law = MpParams::new(beta)?;
    let points = points.clamp(2, 4000);
    let (lo, hi) = (law.support_lo, law.support_hi);
    let x: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let y: Vec<f64> = x.iter().map(|&v| law.density(v)).collect();
    let q = law.quantile(alpha, 1e-9)?;
    Ok(json!({ "beta": beta, "lo": lo, "hi": hi, "x": x, "y": y, "alpha": alpha, "quantile": q }))
}

/// `S(r)²` for `r = 1..=min(q,n)` by the MP approximation, with the lower
/// and upper envelopes.
pub fn skf_profile(q: usize, n: usize) -> lowrank::Result<Value> {
    if q.saturating_mul(n) > 250_000 {
        return Err(lowrank::Error::Argument(
            "keep q·n at most 250000 in the browser".into(),
        ));
    }
    let t = skf_marchenko_pastur(q, n, 1e-9)?;
    let k = t.max_rank();
    let mut lower = Vec::with_capacity(k);
    let mut upper = Vec::with_capacity(k);
    for r in 1..=k {
        let (lo, hi) = skf_bounds(q, n, r)?;
        lower.push(lo);
        upper.push(hi);
    }
    let s2: Vec<f64> = (1..=k).map(|r| t.s2(r)).collect();
    Ok(
        json!({ "q": q, "n": n, "r": (1..=k).collect::<Vec<_>>(), "s2": s2, "lower": lower, "upper": upper }),
    )
}

/// Parameters of one simulated data set for [`explore`].
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub r_true: usize,
    pub rho: f64,
    pub b: f64,
    pub sigma: f64,
    pub seed: u64,
    pub k: f64,
}

/// Draw one data set, run the KF and RSCI selectors and return the
/// criterion curves.
pub fn explore(s: Scenario) -> lowrank::Result<Value> {
    if s.m.max(s.p).max(s.n) > 300 {
        return Err(lowrank::Error::Argument(
            "keep m, p and n at most 300 in the browser".into(),
        ));
    }
    if s.r_true == 0 || s.r_true > s.p.min(s.n) {
        return Err(lowrank::Error::Argument(format!(
            "true rank must lie in 1..={}",
            s.p.min(s.n)
        )));
    }
    let x = gen_design(s.m, s.p, s.rho, s.seed)?;
    let a = gen_coef(s.p, s.n, s.r_true, s.b, s.seed)?;
    let y = gen_response(&x, &a, s.sigma, s.seed)?;
    let xa = &x * &a;
    let path = fit_path(&x, &y, RankTol::Auto)?;
    let opts = SkfOptions {
        policy: SkfPolicy::Auto,
        seed: s.seed,
        ..SkfOptions::default()
    };
    let oracle = path.fitted(s.r_true.min(path.max_rank()))?;

    let (m, _, n) = path.dims();
    let q = path.rank_x();
    let kf = match r_max_default(q, n, m, s.k, 0.9) {
        Ok(r_max) => {
            let table = skf_auto(q, n, &opts)?;
            let pen = pen_prime(&table, s.k, m, r_max)?;
            let report = Selector::Kf {
                k: s.k,
                alpha: 0.9,
                r_max: Some(r_max),
            }
            .select(&path, &opts)?;
            let ratio = ratio_metric(&path.fitted(report.r_hat)?, &oracle, &xa)?;
            json!({ "r_hat": report.r_hat, "r": report.r, "criterion": report.criterion,
                    "penalty": pen.values, "ratio": ratio })
        }
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let rsci = match (Selector::Rsci {
        k: s.k,
        r_max: None,
    })
    .select(&path, &opts)
    {
        Ok(report) => {
            let ratio = ratio_metric(&path.fitted(report.r_hat)?, &oracle, &xa)?;
            json!({ "r_hat": report.r_hat, "r": report.r, "criterion": report.criterion,
                    "sigma2": report.sigma2, "ratio": ratio })
        }
        Err(e) if e.is_infeasibility() => json!({ "unavailable": e.to_string() }),
        Err(e) => return Err(e),
    };
    Ok(json!({
        "rank_x": q,
        "singular_values": path.singular_values(),
        "rss": path.rss(),
        "kf": kf,
        "rsci": rsci,
    }))
}

fn to_js(v: lowrank::Result<Value>) -> Result<String, JsError> {
    v.map(|v| v.to_string())
        .map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = mpCurve)]
pub fn mp_curve_js(beta: f64, points: usize, alpha: f64) -> Result<String, JsError> {
    to_js(mp_curve(beta, points, alpha))
}

#[wasm_bindgen(js_name = skfProfile)]
pub fn skf_profile_js(q: usize, n: usize) -> Result<String, JsError> {
    to_js(skf_profile(q, n))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = exploreRank)]
pub fn explore_js(
    m: usize,
    p: usize,
    n: usize,
    r_true: usize,
    rho: f64,
    b: f64,
    sigma: f64,
    seed: u32,
    k: f64,
) -> Result<String, JsError> {
    to_js(explore(Scenario {
        m,
        p,
        n,
        r_true,
        rho,
        b,
        sigma,
        seed: u64::from(seed),
        k,
    }))
}
