//! Digamma, trigamma and log-gamma on the positive real axis.
//!
//! Both polygamma routines shift the argument upward with the recurrences
//! `ψ(x) = ψ(x+1) − 1/x`, `ψ₁(x) = ψ₁(x+1) + 1/x²` until `x ≥ 10`, then sum
//! the Bernoulli asymptotic series. Truncation error of the series at the
//! threshold is below `1e-17`.
//!
//! [`digamma_minus_ln`] evaluates `ψ(x) − ln x` without forming the two large
//! terms separately. Differences such as `ln 2 + ψ(a+1) − ψ(2a+1)` with
//! `a ≈ 2^{60}` are only representable through this residual.

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// `B_{2k} / (2k)` for `k = 1..=8`.
const DIGAMMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

/// `B_{2k}` for `k = 1..=8`.
const TRIGAMMA_SERIES: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

// ψ(x) − ln x for x ≥ threshold
fn asymptotic_residual(x: f64) -> f64 {
    let inv2 = 1.0 / (x * x);
    let mut poly = 0.0;
    for c in DIGAMMA_SERIES.iter().rev() {
        poly = (poly + c) * inv2;
    }
    -0.5 / x - poly
}

fn shift_count(x: f64) -> usize {
    if x >= ASYMPTOTIC_THRESHOLD {
        0
    } else {
        (ASYMPTOTIC_THRESHOLD - x).ceil() as usize
    }
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`. Returns NaN outside the domain.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_infinite() {
        return if x == f64::INFINITY { x } else { f64::NAN };
    }
    let m = shift_count(x);
    if m == 0 {
        return x.ln() + asymptotic_residual(x);
    }
    let shifted = x + m as f64;
    let correction: f64 = (0..m).rev().map(|i| 1.0 / (x + i as f64)).sum();
    shifted.ln() + asymptotic_residual(shifted) - correction
}

/// Checked [`digamma`].
pub fn try_digamma(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(digamma(x))
    } else {
        Err(Error::SpecialFunctionDomain {
            function: "digamma",
            value: x,
        })
    }
}

/// `ψ(x) − ln x` for `x > 0`, accurate to a few ulps relative to its own
/// magnitude (which lies in `(−1/x, −1/(2x))`). Returns 0 at `+∞` and NaN
/// outside the domain.
pub fn digamma_minus_ln(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x >= ASYMPTOTIC_THRESHOLD {
        asymptotic_residual(x)
    } else {
        digamma(x) - x.ln()
    }
}

/// Trigamma `ψ₁(x) = d²/dx² ln Γ(x)` for `x > 0`. Returns NaN outside the
/// domain.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let m = shift_count(x);
    let shifted = x + m as f64;
    let inv = 1.0 / shifted;
    let inv2 = inv * inv;
    let mut poly = 0.0;
    for b in TRIGAMMA_SERIES.iter().rev() {
        poly = (poly + b) * inv2;
    }
    let tail = inv + 0.5 * inv2 + poly * inv;
    let correction: f64 = (0..m)
        .rev()
        .map(|i| {
            let y = x + i as f64;
            1.0 / (y * y)
        })
        .sum();
    tail + correction
}

/// Checked [`trigamma`].
pub fn try_trigamma(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(trigamma(x))
    } else {
        Err(Error::SpecialFunctionDomain {
            function: "trigamma",
            value: x,
        })
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    libm::lgamma(x)
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Hurwitz zeta `ζ(s, q) = Σ_{k ≥ 0} (q + k)^{−s}` for `s > 1`, `q > 0`,
/// by Euler–Maclaurin summation past `max(10, 2s)`.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    if !(s > 1.0 && q > 0.0) {
        return f64::NAN;
    }
    let start = ASYMPTOTIC_THRESHOLD.max(2.0 * s);
    let mut head = 0.0;
    let mut x = q;
    while x < start {
        head += x.powf(-s);
        x += 1.0;
    }
    let xs = x.powf(-s);
    let mut tail = x * xs / (s - 1.0) + 0.5 * xs;
    // B_{2j}/(2j)! · s(s+1)…(s+2j−2) · x^{−s−2j+1}
    let mut factor = s * xs / x;
    let mut factorial = 2.0;
    for (j, b) in TRIGAMMA_SERIES.iter().enumerate() {
        let j = j as f64 + 1.0;
        tail += b / factorial * factor;
        factor *= (s + 2.0 * j - 1.0) * (s + 2.0 * j) / (x * x);
        factorial *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
    }
    head + tail
}
