//! Special functions used by the limit constants and the Lévy tails.
//!
//! Gamma-family values go through `statrs` (Lanczos log-gamma, ~1e-15
//! relative); the exponential integral and its inverse are local.

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn beta(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// Trigamma ψ₁(x) for x > 0: upward recurrence to x ≥ 20, then the
/// Bernoulli asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0))))
}

/// Exponential integral E₁(x) = ∫ₓ^∞ e^{-t}/t dt for x > 0.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        // -γ - ln x - Σ (-x)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let contrib = term / k as f64;
            sum += contrib;
            if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Inverse of E₁ on (0, ∞): returns x with E₁(x) = y.
///
/// Safeguarded Newton iteration in log x. Values of y large enough that
/// x underflows return 0.
pub fn exp_integral_e1_inv(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::param("y", format!("E1 inverse needs y > 0, got {y}")));
    }
    if y > 700.0 {
        // E₁(x) = -γ - ln x + O(x) and x < 1e-300 here
        return Ok((-EULER_GAMMA - y).exp());
    }
    // bracket in t = ln x
    let mut lo = -800.0_f64;
    let mut hi = 7.0_f64;
    while exp_integral_e1(hi.exp()) > y {
        hi += 1.0;
        if hi > 800.0 {
            return Err(Error::Range(format!("E1 inverse: y = {y:e} underflows")));
        }
    }
    let mut t = if y > 1.0 {
        -EULER_GAMMA - y
    } else {
        let l = -y.ln();
        (l - l.ln().max(0.0)).max(1e-3).ln()
    };
    t = t.clamp(lo, hi);
    for _ in 0..200 {
        let x = t.exp();
        let g = exp_integral_e1(x) - y;
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // g'(t) = -e^{-x}
        let step = g * x.exp();
        let mut next = t + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() < 1e-15 * t.abs().max(1.0) {
            return Ok(next.exp());
        }
        t = next;
        if hi - lo < 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    Ok(t.exp())
}
