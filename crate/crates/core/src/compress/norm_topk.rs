use crate::error::{param, Result};
use crate::grad::{magnitude_order, DenseGradient};

/// Keeps the longest magnitude-ordered prefix whose squared sum stays within
/// `k · ‖g‖²`; everything else is zeroed.
///
/// The norm is accumulated in the same order as the prefix sum, so `k = 1`
/// always keeps every coordinate. If the single largest coordinate already
/// exceeds the target the result is the zero vector.
pub fn norm_top_k(g: &DenseGradient, k: f64) -> Result<DenseGradient> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(param("k", format!("must lie in (0, 1], got {k}")));
    }
    let values = g.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(magnitude_order(values));

    let norm_sq: f64 = order.iter().map(|&j| values[j] * values[j]).sum();
    let target = norm_sq * k;

    let mut out = vec![0.0; values.len()];
    let mut acc = 0.0;
    for &j in &order {
        let next = acc + values[j] * values[j];
        if next > target {
            break;
        }
        acc = next;
        out[j] = values[j];
    }
    Ok(DenseGradient::from_finite(out))
}
