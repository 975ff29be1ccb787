use rand::{Rng, RngCore};

use crate::error::{param, Result};
use crate::grad::{self, DenseGradient};
use crate::rng;

/// Randomized Hadamard rotation `R = H·D / √n` on the zero-padded space.
///
/// `D` is a seeded ±1 diagonal and `H` the unnormalized Walsh–Hadamard
/// matrix of size `n = d.next_power_of_two()`. `R` is orthonormal, so the
/// inverse is `D·H / √n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedHadamard {
    dim: usize,
    signs: Vec<f64>,
}

impl RandomizedHadamard {
    pub fn new(dim: usize, seed: u64) -> Self {
        let padded = dim.max(1).next_power_of_two();
        let mut r = rng::substream(seed, &[0x524f_5441_5445]);
        let signs = (0..padded)
            .map(|_| if r.next_u32() & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        Self { dim, signs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn padded_dim(&self) -> usize {
        self.signs.len()
    }

    /// Rotates a length-`dim` vector into the length-`padded_dim` space.
    pub fn rotate(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut buf = vec![0.0; self.padded_dim()];
        for (j, &v) in x.iter().enumerate() {
            buf[j] = v * self.signs[j];
        }
        fwht_normalized(&mut buf);
        buf
    }

    /// Inverse rotation, truncated back to `dim` coordinates.
    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.padded_dim());
        let mut buf = y.to_vec();
        fwht_normalized(&mut buf);
        buf.truncate(self.dim);
        for (v, s) in buf.iter_mut().zip(&self.signs) {
            *v *= s;
        }
        buf
    }
}

fn fwht_normalized(buf: &mut [f64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (buf[i], buf[i + h]);
                buf[i] = a + b;
                buf[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Output of [`sto_klevel`]: one grid level per (possibly rotated) coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct KLevelGradient {
    dim: usize,
    levels: usize,
    codes: Vec<u16>,
}

impl KLevelGradient {
    /// The value of grid level `r` on `[-1, 1]`: `-1 + 2r/(m-1)`.
    pub fn grid_value(levels: usize, r: usize) -> f64 {
        -1.0 + 2.0 * r as f64 / (levels - 1) as f64
    }

    pub fn grid(levels: usize) -> Vec<f64> {
        (0..levels).map(|r| Self::grid_value(levels, r)).collect()
    }

    /// Original (unrotated) dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// True when the teacher had a zero gradient and cast no votes.
    pub fn is_abstention(&self) -> bool {
        self.codes.is_empty()
    }

    /// Level indices, one per coordinate in the quantized (rotated) space.
    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Grid values in the quantized space; empty for an abstention.
    pub fn values(&self) -> Vec<f64> {
        self.codes
            .iter()
            .map(|&r| Self::grid_value(self.levels, r as usize))
            .collect()
    }
}

/// Rounds `x ∈ [-1, 1]` to an adjacent grid level so the expectation is `x`.
fn stochastic_level<R: Rng + ?Sized>(x: f64, levels: usize, rng: &mut R) -> u16 {
    let top = (levels - 1) as f64;
    let t = ((x + 1.0) * 0.5 * top).clamp(0.0, top);
    let lower = (t.floor() as usize).min(levels - 2);
    let frac = t - lower as f64;
    let u: f64 = rng.random();
    (if u < frac { lower + 1 } else { lower }) as u16
}

/// Normalized input to the quantizer: clipped, optionally rotated, ℓ∞-scaled.
/// `None` for a zero gradient.
pub(crate) fn klevel_prequantize(
    g: &DenseGradient,
    c: f64,
    rotation: Option<&RandomizedHadamard>,
) -> Result<Option<Vec<f64>>> {
    let clipped = grad::clip_coordinates(g, c)?;
    let rotated = match rotation {
        Some(rot) => {
            if rot.dim() != g.dim() {
                return Err(crate::error::Error::DimensionMismatch {
                    expected: rot.dim(),
                    actual: g.dim(),
                });
            }
            rot.rotate(clipped.values())
        }
        None => clipped.into_values(),
    };
    let scale = rotated.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(None);
    }
    Ok(Some(rotated.iter().map(|v| v / scale).collect()))
}

/// m-level stochastic quantization.
///
/// Clips to `[-c, c]`, applies the rotation if given, ℓ∞-normalizes to
/// `[-1, 1]` and rounds each coordinate stochastically onto the uniform
/// `m`-point grid. With `m = 2` this is per-coordinate stochastic sign.
pub fn sto_klevel<R: Rng + ?Sized>(
    g: &DenseGradient,
    c: f64,
    m: usize,
    rotation: Option<&RandomizedHadamard>,
    rng: &mut R,
) -> Result<KLevelGradient> {
    if m < 2 {
        return Err(param("m", format!("needs at least 2 levels, got {m}")));
    }
    if m > u16::MAX as usize {
        return Err(param("m", "at most 65535 levels"));
    }
    let codes = match klevel_prequantize(g, c, rotation)? {
        None => Vec::new(),
        Some(x) => x.iter().map(|&v| stochastic_level(v, m, rng)).collect(),
    };
    Ok(KLevelGradient { dim: g.dim(), levels: m, codes })
}
