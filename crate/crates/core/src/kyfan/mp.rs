//! Marchenko–Pastur law: density, upper-tail quantile and partial first moment.
//!
//! Integrals are taken in the angle variable `x = c − h·cos θ` where `c` and
//! `h` are the centre and half-width of the support. The square-root factor of
//! the density becomes `h·sin θ` and the Jacobian another `h·sin θ`, so both
//! integrands are smooth on `[0, π]` even when the lower edge sits at 0
//! (β = 1). The transformed integrals are then handed to a double-exponential
//! adaptive rule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};

/// Absolute tolerance for every Marchenko–Pastur integral.
pub const QUAD_TOL: f64 = 1e-9;

/// Bisection steps allowed before giving up. Widths halve each step, so 200
/// is far beyond what any `eps` representable in f64 needs.
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    pub beta: f64,
    pub support_lo: f64,
    pub support_hi: f64,
}

impl MpParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return arg_err(format!("beta must lie in (0, 1], got {beta}"));
        }
        let sb = beta.sqrt();
        Ok(Self {
            beta,
            support_lo: (1.0 - sb) * (1.0 - sb),
            support_hi: (1.0 + sb) * (1.0 + sb),
        })
    }

    /// Aspect ratio `min(q,n)/max(q,n)`.
    pub fn for_dims(q: usize, n: usize) -> Result<Self> {
        if q == 0 || n == 0 {
            return arg_err(format!("dimensions must be positive, got {q}×{n}"));
        }
        Self::new(q.min(n) as f64 / q.max(n) as f64)
    }

    fn centre(&self) -> f64 {
        0.5 * (self.support_lo + self.support_hi)
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.support_hi - self.support_lo)
    }

    /// Point of the support at angle θ. Written as `lo + 2h·sin²(θ/2)` so that
    /// it stays accurate near θ = 0 when `lo = 0`.
    fn x_at(&self, theta: f64) -> f64 {
        let s = (0.5 * theta).sin();
        self.support_lo + 2.0 * self.half_width() * s * s
    }

    fn theta_at(&self, x: f64) -> f64 {
        let c = ((self.centre() - x) / self.half_width()).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= self.support_lo || x >= self.support_hi || x <= 0.0 {
            return 0.0;
        }
        let prod = (x - self.support_lo) * (self.support_hi - x);
        prod.sqrt() / (2.0 * PI * self.beta * x)
    }

    /// Mass of the law on `[x, support_hi]`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        if x >= self.support_hi {
            return 0.0;
        }
        let h = self.half_width();
        let scale = h * h / (2.0 * PI * self.beta);
        let integrand = |t: f64| {
            let s = t.sin();
            let xt = self.x_at(t);
            if xt <= 0.0 {
                // only reachable at θ = 0 with lo = 0, where the limit is finite
                return scale * 4.0 / (2.0 * h);
            }
            scale * s * s / xt
        };
        quadrature::double_exponential::integrate(integrand, self.theta_at(x), PI, QUAD_TOL)
            .integral
    }

    /// `∫_x^{support_hi} t·f(t) dt`.
    pub fn upper_partial_moment(&self, x: f64) -> f64 {
        if x >= self.support_hi {
            return 0.0;
        }
        let h = self.half_width();
        let scale = h * h / (2.0 * PI * self.beta);
        let integrand = |t: f64| {
            let s = t.sin();
            scale * s * s
        };
        quadrature::double_exponential::integrate(integrand, self.theta_at(x), PI, QUAD_TOL)
            .integral
    }

    /// `x_α` with `∫_{x_α}^{support_hi} f = α`, by bisection down to width `eps`.
    pub fn quantile(&self, alpha: f64, eps: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return arg_err(format!("alpha must lie in [0, 1], got {alpha}"));
        }
        if !(eps > 0.0) {
            return arg_err(format!("eps must be positive, got {eps}"));
        }
        if alpha == 1.0 {
            return Ok(self.support_lo);
        }
        if alpha == 0.0 {
            return Ok(self.support_hi);
        }
        let (mut lo, mut hi) = (self.support_lo, self.support_hi);
        let mut steps = 0;
        while hi - lo > eps {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || steps >= MAX_BISECTIONS {
                return Err(Error::Numerical(format!(
                    "quantile bisection stalled at width {:e} (eps = {eps:e})",
                    hi - lo
                )));
            }
            if self.upper_tail(mid) < alpha {
                hi = mid;
            } else {
                lo = mid;
            }
            steps += 1;
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Marchenko–Pastur density `f_β(x)`.
pub fn mp_density(x: f64, beta: f64) -> Result<f64> {
    Ok(MpParams::new(beta)?.density(x))
}

/// Upper-tail quantile `x_α` of the Marchenko–Pastur law.
pub fn mp_quantile(alpha: f64, beta: f64, eps: f64) -> Result<f64> {
    MpParams::new(beta)?.quantile(alpha, eps)
}
