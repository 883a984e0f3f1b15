//! Special functions.

use crate::error::{Error, Result};

/// Digamma function `ψ(x) = Γ'(x)/Γ(x)` for `x > 0`.
///
/// Shifts the argument above 10 with `ψ(x) = ψ(x+1) − 1/x`, then applies the
/// asymptotic series in `1/x²` through the `x^{-14}` term. Absolute error is
/// below 1e-13 on `(0, ∞)`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    let mut shift = 0.0;
    let mut y = x;
    while y < 10.0 {
        shift += 1.0 / y;
        y += 1.0;
    }
    let r = 1.0 / (y * y);
    // Bernoulli terms B_{2k} / (2k) for k = 1..7.
    const C: [f64; 7] = [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];
    let mut series = 0.0;
    for &c in C.iter().rev() {
        series = series * r + c;
    }
    series *= r;
    Ok(y.ln() - 0.5 / y - series - shift)
}

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}
