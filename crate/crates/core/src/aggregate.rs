//! Differentially private aggregation of teacher gradients.
//!
//! Each mechanism compresses every teacher gradient independently (in
//! parallel, one derived substream per teacher), reduces the votes with an
//! order-independent integer sum, then draws Gaussian noise from the caller's
//! stream in a single post-reduction step. The released value only depends on
//! the noisy sum.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compress::{self, CountSketch, KLevelGradient, RandomizedHadamard, SparseSignGradient};
use crate::error::{param, Error, Result};
use crate::grad::{self, DenseGradient};
use crate::rng;

/// {-1, 0, +1} aggregate released to the student.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryGradient(Vec<i8>);

impl TernaryGradient {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::Format(format!("ternary value out of range: {bad}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

const TERNARY_MAGIC: &[u8; 4] = b"DLT1";

/// `DLT1` dump: magic, u32 dim, then 2-bit codes packed four per byte with
/// coordinate `j` in bits `2·(j mod 4)` of byte `j / 4`. Codes: 00 = 0,
/// 01 = +1, 10 = -1.
pub fn encode_ternary(t: &TernaryGradient) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + t.dim().div_ceil(4));
    out.extend_from_slice(TERNARY_MAGIC);
    out.extend_from_slice(&(t.dim() as u32).to_le_bytes());
    let mut packed = vec![0u8; t.dim().div_ceil(4)];
    for (j, &v) in t.values().iter().enumerate() {
        let code: u8 = match v {
            1 => 0b01,
            -1 => 0b10,
            _ => 0b00,
        };
        packed[j / 4] |= code << (2 * (j % 4));
    }
    out.extend_from_slice(&packed);
    out
}

pub fn decode_ternary(bytes: &[u8]) -> Result<TernaryGradient> {
    if bytes.len() < 8 || &bytes[..4] != TERNARY_MAGIC {
        return Err(Error::Format("missing DLT1 header".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != dim.div_ceil(4) {
        return Err(Error::Format("DLT1 payload length does not match dimension".into()));
    }
    let values = (0..dim)
        .map(|j| match (body[j / 4] >> (2 * (j % 4))) & 0b11 {
            0b00 => Ok(0),
            0b01 => Ok(1),
            0b10 => Ok(-1),
            _ => Err(Error::Format(format!("invalid code at coordinate {j}"))),
        })
        .collect::<Result<Vec<i8>>>()?;
    Ok(TernaryGradient(values))
}

/// Parameters shared by the vote aggregators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationParams {
    pub teachers: usize,
    pub sigma: f64,
    pub beta: f64,
    pub k: usize,
    pub c: f64,
}

impl AggregationParams {
    /// Validation for private runs: requires `σ > 0` and `β ∈ (0, 1]`.
    pub fn validate(&self) -> Result<()> {
        self.validate_relaxed()?;
        if !(self.sigma > 0.0) {
            return Err(param("sigma", "must be > 0 for a private aggregation"));
        }
        if !(self.beta > 0.0) {
            return Err(param("beta", "must be > 0"));
        }
        Ok(())
    }

    /// Validation that admits `σ = 0` and `β = 0` (non-private test mode).
    pub fn validate_relaxed(&self) -> Result<()> {
        if self.teachers == 0 {
            return Err(param("teachers", "need at least one teacher"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(param("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return Err(param("beta", format!("must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(param("c", format!("must be positive, got {}", self.c)));
        }
        if self.k == 0 {
            return Err(param("k", "must be >= 1"));
        }
        Ok(())
    }

    /// Vote threshold `β·N`.
    pub fn threshold(&self) -> f64 {
        self.beta * self.teachers as f64
    }
}

/// Suggested β interval `[σ/2N, σ/N]`, clipped to `(0, 1]`.
pub fn recommended_beta_range(sigma: f64, teachers: usize) -> (f64, f64) {
    let n = teachers as f64;
    ((sigma / (2.0 * n)).min(1.0), (sigma / n).min(1.0))
}

/// Pre-noise vote sums and the noisy sums derived from them.
///
/// The noiseless sums are input to the data-dependent accountant only; this
/// type is deliberately not serializable.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteSum {
    sums: Vec<i64>,
    noisy: Vec<f64>,
}

impl VoteSum {
    pub fn dim(&self) -> usize {
        self.sums.len()
    }

    /// Noiseless integer vote totals `f_j`.
    pub fn sums(&self) -> &[i64] {
        &self.sums
    }

    pub fn sums_f64(&self) -> Vec<f64> {
        self.sums.iter().map(|&s| s as f64).collect()
    }

    /// Noisy totals `f_j + n_j`.
    pub fn noisy(&self) -> &[f64] {
        &self.noisy
    }

    pub fn max_abs_sum(&self) -> i64 {
        self.sums.iter().map(|s| s.abs()).max().unwrap_or(0)
    }
}

/// ℓ₂ sensitivity of the vote sum under replacement of one teacher: `2√k`.
pub fn sum_sensitivity(k: usize) -> f64 {
    2.0 * (k as f64).sqrt()
}

/// Largest ℓ₂ distance between two teachers' m-level vote vectors of
/// dimension `d` (rotated space): every coordinate can move across the full
/// `[-1, 1]` grid, so `2√d`.
pub fn klevel_sum_sensitivity(d: usize) -> f64 {
    2.0 * (d as f64).sqrt()
}

/// Thresholds noisy sums: `+1` if `≥ βN`, else `-1` if `≤ -βN`, else `0`.
///
/// Takes nothing but the noisy sums, which is what makes the ternary output
/// post-processing of the Gaussian mechanism.
pub fn threshold(noisy: &[f64], beta_n: f64) -> TernaryGradient {
    TernaryGradient(
        noisy
            .iter()
            .map(|&v| {
                if v >= beta_n {
                    1
                } else if v <= -beta_n {
                    -1
                } else {
                    0
                }
            })
            .collect(),
    )
}

fn check_teachers(gradients: &[DenseGradient], p: &AggregationParams) -> Result<usize> {
    let first = gradients.first().ok_or(Error::Empty("no teacher gradients"))?;
    let d = first.dim();
    if gradients.len() != p.teachers {
        return Err(param(
            "teachers",
            format!("expected {} gradients, got {}", p.teachers, gradients.len()),
        ));
    }
    if let Some(bad) = gradients.iter().find(|g| g.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: bad.dim() });
    }
    if p.k > d {
        return Err(param("k", format!("k = {} exceeds dimension {d}", p.k)));
    }
    Ok(d)
}

/// Compresses every teacher gradient with its own substream of `base_seed`.
pub fn compress_teachers(
    gradients: &[DenseGradient],
    c: f64,
    k: usize,
    base_seed: u64,
) -> Result<Vec<SparseSignGradient>> {
    gradients
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut r = rng::substream(base_seed, &[i as u64]);
            compress::topk_sto_sign(g, c, k, &mut r)
        })
        .collect()
}

/// Integer vote totals over compressed teachers.
pub fn sum_votes(votes: &[SparseSignGradient], dim: usize) -> Vec<i64> {
    let mut sums = vec![0i64; dim];
    for v in votes {
        for &(j, s) in v.entries() {
            sums[j] += i64::from(s);
        }
    }
    sums
}

fn gaussian_noise<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Top-k stochastic-sign compression, Gaussian vote aggregation and thresholding.
pub fn dp_topk_agg<R: Rng + ?Sized>(
    gradients: &[DenseGradient],
    p: &AggregationParams,
    rng: &mut R,
) -> Result<(TernaryGradient, VoteSum)> {
    p.validate_relaxed()?;
    let d = check_teachers(gradients, p)?;
    let votes = compress_teachers(gradients, p.c, p.k, rng.next_u64())?;
    let sums = sum_votes(&votes, d);
    let n = p.teachers as i64;
    assert!(
        sums.iter().all(|s| s.abs() <= n),
        "vote sum escaped [-N, N]"
    );
    let noise = gaussian_noise(d, p.sigma, rng);
    let noisy: Vec<f64> = sums.iter().zip(&noise).map(|(&s, &z)| s as f64 + z).collect();
    let out = threshold(&noisy, p.threshold());
    Ok((out, VoteSum { sums, noisy }))
}

/// Result of [`d2pfed_agg`].
#[derive(Debug, Clone, PartialEq)]
pub struct D2pFedOutput {
    /// Thresholded aggregate in the quantized (rotated) coordinates.
    pub rotated: TernaryGradient,
    /// Inverse rotation of `rotated`, truncated to the original dimension.
    /// Present only when requested and a rotation was used.
    pub derotated: Option<DenseGradient>,
}

/// m-level quantized aggregation.
///
/// Every teacher is quantized with [`compress::sto_klevel`] under the same
/// rotation; level values are summed, Gaussian noise is added and the same
/// threshold rule is applied.
pub fn d2pfed_agg<R: Rng + ?Sized>(
    gradients: &[DenseGradient],
    p: &AggregationParams,
    levels: usize,
    rotation_seed: Option<u64>,
    derotate: bool,
    rng: &mut R,
) -> Result<D2pFedOutput> {
    p.validate_relaxed()?;
    let first = gradients.first().ok_or(Error::Empty("no teacher gradients"))?;
    let d = first.dim();
    if gradients.len() != p.teachers {
        return Err(param("teachers", "gradient count does not match N"));
    }
    if let Some(bad) = gradients.iter().find(|g| g.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: bad.dim() });
    }
    let rotation = rotation_seed.map(|s| RandomizedHadamard::new(d, s));
    let qdim = rotation.as_ref().map_or(d, RandomizedHadamard::padded_dim);
    let base = rng.next_u64();
    let quantized: Vec<KLevelGradient> = gradients
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut r = rng::substream(base, &[i as u64]);
            compress::sto_klevel(g, p.c, levels, rotation.as_ref(), &mut r)
        })
        .collect::<Result<_>>()?;

    // Sum level indices as integers, then map to grid values:
    // Σ (-1 + 2r/(m-1)) = 2·Σr/(m-1) - voters.
    let mut code_sums = vec![0i64; qdim];
    let mut voters = 0i64;
    for q in quantized.iter().filter(|q| !q.is_abstention()) {
        voters += 1;
        for (acc, &r) in code_sums.iter_mut().zip(q.codes()) {
            *acc += i64::from(r);
        }
    }
    let step = 2.0 / (levels - 1) as f64;
    let noise = gaussian_noise(qdim, p.sigma, rng);
    let noisy: Vec<f64> = code_sums
        .iter()
        .zip(&noise)
        .map(|(&s, &z)| step * s as f64 - voters as f64 + z)
        .collect();
    let rotated = threshold(&noisy, p.threshold());
    let derotated = match (&rotation, derotate) {
        (Some(rot), true) => Some(DenseGradient::from_finite(rot.inverse(&rotated.to_f64()))),
        _ => None,
    };
    Ok(D2pFedOutput { rotated, derotated })
}

/// Sketch shape for [`fetchsgd_agg`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchShape {
    pub rows: usize,
    pub width: usize,
    pub seed: u64,
}

/// Count-sketch aggregation of top-k stochastic-sign votes.
///
/// Votes are sketched into one shared sketch (per-teacher sketches merged by
/// linearity); the output keeps the top-k coordinates of the unsketched
/// estimate, zeroes the rest, then adds `N(0, σ²)` to every coordinate.
pub fn fetchsgd_agg<R: Rng + ?Sized>(
    gradients: &[DenseGradient],
    p: &AggregationParams,
    shape: SketchShape,
    rng: &mut R,
) -> Result<DenseGradient> {
    p.validate_relaxed()?;
    let d = check_teachers(gradients, p)?;
    let votes = compress_teachers(gradients, p.c, p.k, rng.next_u64())?;
    let mut sketch = CountSketch::new(d, shape.rows, shape.width, shape.seed)?;
    for v in &votes {
        sketch.add_sparse(v)?;
    }
    let estimate = sketch.unsketch();
    let keep = grad::top_k_of(estimate.values(), p.k)?;
    let mut out = vec![0.0; d];
    for j in keep {
        out[j] = estimate.values()[j];
    }
    let noise = gaussian_noise(d, p.sigma, rng);
    for (o, z) in out.iter_mut().zip(noise) {
        *o += z;
    }
    Ok(DenseGradient::from_finite(out))
}
