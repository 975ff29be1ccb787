//! Dense gradient values, clipping, norms and top-k selection.

use std::cmp::Ordering;

use crate::error::{param, Error, Result};

/// A finite, nonempty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradient(Vec<f64>);

impl DenseGradient {
    /// Wraps `values`, rejecting empty vectors and non-finite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("gradient must have dimension >= 1"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Internal constructor for outputs of operations that preserve finiteness.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn linf_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Strictly increasing coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(param(name, format!("must be a positive finite real, got {v}")))
    }
}

/// Clamps every component into `[-c, c]`.
pub fn clip_coordinates(g: &DenseGradient, c: f64) -> Result<DenseGradient> {
    check_positive("c", c)?;
    Ok(DenseGradient::from_finite(
        g.values().iter().map(|&v| v.max(-c).min(c)).collect(),
    ))
}

/// Rescales `g` to have ℓ₂ norm at most `bound`; vectors already inside are returned as-is.
pub fn clip_l2(g: &DenseGradient, bound: f64) -> Result<DenseGradient> {
    check_positive("C", bound)?;
    let norm = g.l2_norm();
    if norm <= bound {
        return Ok(g.clone());
    }
    let scale = norm / bound;
    Ok(DenseGradient::from_finite(
        g.values().iter().map(|&v| v / scale).collect(),
    ))
}

/// Divides by the ℓ∞ norm. The zero vector maps to itself.
pub fn linf_normalize(g: &DenseGradient) -> DenseGradient {
    let m = g.linf_norm();
    if m == 0.0 {
        return g.clone();
    }
    DenseGradient::from_finite(g.values().iter().map(|&v| v / m).collect())
}

/// Orders indices by decreasing magnitude, ties to the lower index.
pub(crate) fn magnitude_order(values: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// The `k` indices of largest `|g_j|`, sorted ascending.
pub fn top_k_indices(g: &DenseGradient, k: usize) -> Result<IndexSet> {
    Ok(IndexSet(top_k_of(g.values(), k)?))
}

pub(crate) fn top_k_of(values: &[f64], k: usize) -> Result<Vec<usize>> {
    let d = values.len();
    if k == 0 || k > d {
        return Err(param("k", format!("must satisfy 1 <= k <= d = {d}, got {k}")));
    }
    let mut idx: Vec<usize> = (0..d).collect();
    if k < d {
        idx.select_nth_unstable_by(k - 1, magnitude_order(values));
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(idx)
}

const DENSE_MAGIC: &[u8; 4] = b"DLG1";
const DENSE_VERSION: u8 = 1;

/// `DLG1` dump: magic, version byte, u32 dimension, then little-endian f64 values.
pub fn encode_dense(g: &DenseGradient) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 8 * g.dim());
    out.extend_from_slice(DENSE_MAGIC);
    out.push(DENSE_VERSION);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for v in g.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseGradient> {
    if bytes.len() < 9 || &bytes[..4] != DENSE_MAGIC {
        return Err(Error::Format("missing DLG1 header".into()));
    }
    if bytes[4] != DENSE_VERSION {
        return Err(Error::Format(format!("unsupported DLG1 version {}", bytes[4])));
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = &bytes[9..];
    if body.len() != dim * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            dim * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseGradient::new(values)
}
