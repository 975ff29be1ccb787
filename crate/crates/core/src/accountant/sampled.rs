use crate::error::{param, Result};

use super::normal::log_add_exp;
use super::rdp::gaussian_rdp;

/// RDP of the Poisson-subsampled Gaussian mechanism (sensitivity 1, noise
/// multiplier `sigma`) at integer order `λ ≥ 2`:
///
/// `α = ln( Σ_{i=0}^{λ} C(λ,i) (1-q)^{λ-i} q^i exp((i² - i) / (2σ²)) ) / (λ - 1)`.
pub fn sampled_gaussian_rdp(q: f64, sigma: f64, order: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(param("q", format!("sampling rate must lie in [0, 1], got {q}")));
    }
    if !(sigma > 0.0) {
        return Err(param("sigma", "noise multiplier must be > 0"));
    }
    if order.fract() != 0.0 || order < 2.0 {
        return Err(param("order", format!("integer order >= 2 required, got {order}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return gaussian_rdp(1.0, sigma, order);
    }
    let lambda = order as u64;
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let two_var = 2.0 * sigma * sigma;
    let mut ln_binom = 0.0f64;
    let mut acc = f64::NEG_INFINITY;
    for i in 0..=lambda {
        if i > 0 {
            ln_binom += ((lambda - i + 1) as f64).ln() - (i as f64).ln();
        }
        let fi = i as f64;
        let term =
            ln_binom + (lambda - i) as f64 * ln_1mq + fi * ln_q + (fi * fi - fi) / two_var;
        acc = log_add_exp(acc, term);
    }
    Ok((acc / (order - 1.0)).max(0.0))
}
