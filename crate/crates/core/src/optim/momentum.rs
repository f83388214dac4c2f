//! Momentum advice and variance formulas for quantized moment estimates.

use crate::error::{Error, Result};
use crate::levels::{check_bits, signed_de_median_radius, RadiusStats};

/// Largest `β'` with `β'/(1-β')·r_to <= β/(1-β)·r_from`.
///
/// This is advice for choosing the first-moment momentum when dropping from
/// a table with median radius `r_from` to one with `r_to`; nothing applies it
/// automatically.
pub fn beta_prime(beta: f64, r_from: f64, r_to: f64) -> f64 {
    let rho = beta / (1.0 - beta) * r_from / r_to;
    rho / (1.0 + rho)
}

/// [`beta_prime`] using the reference median radii of signed DE tables.
pub fn beta_prime_for_bits(beta: f64, bits_from: u32, bits_to: u32) -> Result<f64> {
    check_beta(beta)?;
    check_bits(bits_from)?;
    check_bits(bits_to)?;
    if bits_from == bits_to {
        return Ok(beta);
    }
    let r_from = signed_de_median_radius(bits_from).ok_or(Error::UnsupportedBits(bits_from))?;
    let r_to = signed_de_median_radius(bits_to).ok_or(Error::UnsupportedBits(bits_to))?;
    Ok(beta_prime(beta, r_from, r_to))
}

/// [`beta_prime`] using the median radii of two concrete tables.
pub fn beta_prime_for_tables(beta: f64, from: &RadiusStats, to: &RadiusStats) -> Result<f64> {
    check_beta(beta)?;
    if !(to.r_median > 0.0) {
        return Err(Error::InvalidParameter {
            name: "r_median",
            reason: "target table has zero median radius",
        });
    }
    Ok(beta_prime(beta, from.r_median, to.r_median))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "beta",
            reason: "momentum must lie in (0, 1)",
        })
    }
}

/// Extra gradient variance injected by stochastic requantization of a
/// first moment: `(β/(1-β)·r_max·Δ)²`.
pub fn gradient_variance_bound(beta: f64, r_max: f64, delta: f64) -> f64 {
    let k = beta / (1.0 - beta) * r_max * delta;
    k * k
}

/// Variance of `1/sqrt(x̃)` when `x/Δ` in `[y_lo, y_hi]` is stochastically
/// rounded to one of the two levels: `p·q·(Δ/√y_lo - Δ/√y_hi)²` with
/// `p = (y_hi - x/Δ)/(y_hi - y_lo)`.
///
/// A zero lower level makes the variance infinite and is rejected.
pub fn adaptive_lr_variance(x_over_delta: f64, delta: f64, y_lo: f64, y_hi: f64) -> Result<f64> {
    if !(y_lo > 0.0) {
        return Err(Error::InvalidParameter {
            name: "y_lo",
            reason: "a zero level gives an unbounded learning rate",
        });
    }
    if !(y_lo <= x_over_delta && x_over_delta <= y_hi) {
        return Err(Error::InvalidParameter {
            name: "x_over_delta",
            reason: "must lie between the two levels",
        });
    }
    if y_hi == y_lo {
        return Ok(0.0);
    }
    let p = (y_hi - x_over_delta) / (y_hi - y_lo);
    let q = 1.0 - p;
    let spread = delta / libm::sqrt(y_lo) - delta / libm::sqrt(y_hi);
    Ok(p * q * spread * spread)
}
