use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{self, DenseGradient};

/// Sparse ±1 votes over a `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseSignGradient {
    dim: usize,
    entries: Vec<(usize, i8)>,
}

impl SparseSignGradient {
    /// Builds a vote vector, checking that indices are strictly increasing and in range.
    pub fn new(dim: usize, entries: Vec<(usize, i8)>) -> Result<Self> {
        for (pos, &(j, s)) in entries.iter().enumerate() {
            if j >= dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: j + 1 });
            }
            if s != 1 && s != -1 {
                return Err(Error::Format(format!("sign must be +1 or -1, got {s}")));
            }
            if pos > 0 && entries[pos - 1].0 >= j {
                return Err(Error::Format("indices must be strictly increasing".into()));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn abstain(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, i8)] {
        &self.entries
    }

    pub fn is_abstention(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(j, s) in &self.entries {
            out[j] = f64::from(s);
        }
        out
    }
}

/// Top-k stochastic sign compression.
///
/// The support is the top-k of the unclipped magnitudes. Each selected
/// coordinate votes +1 with probability `(1 + ĝ_j) / 2`, where `ĝ` is the
/// coordinate-clipped gradient divided by its ℓ∞ norm. A zero gradient abstains.
pub fn topk_sto_sign<R: Rng + ?Sized>(
    g: &DenseGradient,
    c: f64,
    k: usize,
    rng: &mut R,
) -> Result<SparseSignGradient> {
    let support = grad::top_k_of(g.values(), k)?;
    let clipped = grad::clip_coordinates(g, c)?;
    let scale = clipped.linf_norm();
    if scale == 0.0 {
        return Ok(SparseSignGradient::abstain(g.dim()));
    }
    let entries = support
        .into_iter()
        .map(|j| {
            let p_plus = 0.5 * (1.0 + clipped.values()[j] / scale);
            let u: f64 = rng.random();
            (j, if u < p_plus { 1 } else { -1 })
        })
        .collect();
    Ok(SparseSignGradient { dim: g.dim(), entries })
}

const SPARSE_MAGIC: &[u8; 4] = b"DLS1";

/// `DLS1` dump: magic, u32 dim, u32 count, then `(u32 index, i8 sign)` pairs.
pub fn encode_sparse(s: &SparseSignGradient) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 5 * s.entries.len());
    out.extend_from_slice(SPARSE_MAGIC);
    out.extend_from_slice(&(s.dim as u32).to_le_bytes());
    out.extend_from_slice(&(s.entries.len() as u32).to_le_bytes());
    for &(j, sign) in &s.entries {
        out.extend_from_slice(&(j as u32).to_le_bytes());
        out.push(sign as u8);
    }
    out
}

pub fn decode_sparse(bytes: &[u8]) -> Result<SparseSignGradient> {
    if bytes.len() < 12 || &bytes[..4] != SPARSE_MAGIC {
        return Err(Error::Format("missing DLS1 header".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != count * 5 {
        return Err(Error::Format(format!("expected {count} entries")));
    }
    let entries = body
        .chunks_exact(5)
        .map(|c| (u32::from_le_bytes(c[..4].try_into().unwrap()) as usize, c[4] as i8))
        .collect();
    SparseSignGradient::new(dim, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn g(v: &[f64]) -> DenseGradient {
        DenseGradient::new(v.to_vec()).unwrap()
    }

    #[test]
    fn deterministic_examples() {
        let mut r = rng::stream(1);
        for _ in 0..100 {
            let out = topk_sto_sign(&g(&[0.5, 0.0, 0.0]), 1.0, 1, &mut r).unwrap();
            assert_eq!(out.entries(), &[(0, 1)]);
            let out = topk_sto_sign(&g(&[3.0, -1.0, 2.0]), 2.0, 2, &mut r).unwrap();
            assert_eq!(out.entries(), &[(0, 1), (2, 1)]);
        }
    }

    #[test]
    fn zero_gradient_abstains() {
        let mut r = rng::stream(2);
        for k in 1..=3 {
            let out = topk_sto_sign(&g(&[0.0, 0.0, 0.0]), 0.7, k, &mut r).unwrap();
            assert!(out.is_abstention());
            assert_eq!(out.dim(), 3);
        }
    }

    #[test]
    fn k_bigger_than_d_is_rejected() {
        let mut r = rng::stream(3);
        assert!(matches!(
            topk_sto_sign(&g(&[1.0, 2.0]), 1.0, 3, &mut r),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn monte_carlo_sign_frequency() {
        // g=(2,1), c=2: ĝ=(1, 0.5) so index 1 is +1 with probability 0.75.
        let n = 100_000;
        let mut r = rng::stream(4);
        let mut plus = 0usize;
        for _ in 0..n {
            let out = topk_sto_sign(&g(&[2.0, 1.0]), 2.0, 2, &mut r).unwrap();
            assert_eq!(out.entries()[0], (0, 1));
            if out.entries()[1].1 == 1 {
                plus += 1;
            }
        }
        let p = 0.75;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = plus as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn sparse_dump_layout() {
        let s = SparseSignGradient::new(9, vec![(1, 1), (7, -1)]).unwrap();
        let bytes = encode_sparse(&s);
        assert_eq!(&bytes[..4], b"DLS1");
        assert_eq!(&bytes[4..8], &9u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..17], &[1, 0, 0, 0, 1]);
        assert_eq!(&bytes[17..22], &[7, 0, 0, 0, 0xff]);
        assert_eq!(decode_sparse(&bytes).unwrap(), s);
    }

    #[test]
    fn invalid_entries_rejected() {
        assert!(SparseSignGradient::new(3, vec![(2, 1), (1, 1)]).is_err());
        assert!(SparseSignGradient::new(3, vec![(3, 1)]).is_err());
        assert!(SparseSignGradient::new(3, vec![(0, 0)]).is_err());
    }

    proptest! {
        #[test]
        fn support_and_alphabet(
            v in prop::collection::vec(-5.0f64..5.0, 1..30),
            kfrac in 0.0f64..1.0,
            c in 0.01f64..3.0,
            seed in any::<u64>(),
        ) {
            let x = g(&v);
            let k = 1 + ((x.dim() - 1) as f64 * kfrac) as usize;
            let out = topk_sto_sign(&x, c, k, &mut rng::stream(seed)).unwrap();
            let top = crate::grad::top_k_indices(&x, k).unwrap();
            prop_assert!(out.entries().len() <= k);
            for &(j, s) in out.entries() {
                prop_assert!(s == 1 || s == -1);
                prop_assert!(top.contains(j));
            }
            prop_assert_eq!(decode_sparse(&encode_sparse(&out)).unwrap(), out);
        }
    }
}
