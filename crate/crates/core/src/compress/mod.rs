//! Gradient compressors.
//!
//! - [`topk_sto_sign`]: top-k support, coordinate clipping, ℓ∞ normalization
//!   and stochastic sign rounding. The vote format aggregated by
//!   [`crate::aggregate::dp_topk_agg`].
//! - [`norm_top_k`]: energy-fraction top-k used by DP-SGD.
//! - [`sto_klevel`]: m-level stochastic quantization after a randomized
//!   Hadamard rotation.
//! - [`CountSketch`]: linear sketch for sketched aggregation.
//!
//! [`compress_bench`] compares all four on Gaussian gradients.

mod bench;
mod klevel;
mod norm_topk;
mod sketch;
mod topk_sign;

pub use bench::{compress_bench, BenchConfig, BenchRow};
pub use klevel::{sto_klevel, KLevelGradient, RandomizedHadamard};
pub use norm_topk::norm_top_k;
pub use sketch::CountSketch;
pub use topk_sign::{decode_sparse, encode_sparse, topk_sto_sign, SparseSignGradient};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Selects a compressor and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressionSpec {
    TopKStoSign {
        k: usize,
        c: f64,
    },
    NormTopK {
        k: f64,
        clip_norm: f64,
    },
    KLevel {
        m: usize,
        c: f64,
        rotation_seed: Option<u64>,
    },
    Sketch {
        rows: usize,
        width: usize,
        k: usize,
        c: f64,
        seed: u64,
    },
}

impl CompressionSpec {
    /// Checks parameter ranges against a gradient dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let pos = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(param(name, format!("must be positive, got {v}")))
            }
        };
        let k_in_range = |k: usize| {
            if (1..=d).contains(&k) {
                Ok(())
            } else {
                Err(param("k", format!("must satisfy 1 <= k <= {d}, got {k}")))
            }
        };
        match *self {
            CompressionSpec::TopKStoSign { k, c } => {
                k_in_range(k)?;
                pos("c", c)
            }
            CompressionSpec::NormTopK { k, clip_norm } => {
                if !(k > 0.0 && k <= 1.0) {
                    return Err(param("k", format!("must lie in (0, 1], got {k}")));
                }
                pos("C", clip_norm)
            }
            CompressionSpec::KLevel { m, c, .. } => {
                if m < 2 {
                    return Err(param("m", format!("needs at least 2 levels, got {m}")));
                }
                pos("c", c)
            }
            CompressionSpec::Sketch {
                rows, width, k, c, ..
            } => {
                if rows == 0 || width == 0 {
                    return Err(param("sketch", "rows and width must be >= 1"));
                }
                k_in_range(k)?;
                pos("c", c)
            }
        }
    }
}
