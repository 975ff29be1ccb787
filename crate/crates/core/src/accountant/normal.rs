//! Standard normal distribution helpers.

use std::f64::consts::FRAC_1_SQRT_2;

/// Φ(x) through the complementary error function, accurate in both tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln(1 - p)` for a probability, stable for small `p`.
pub(crate) fn ln_one_minus(p: f64) -> f64 {
    if p < 0.5 {
        (-p).ln_1p()
    } else {
        (1.0 - p).ln()
    }
}

/// `ln(e^a + e^b)`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
