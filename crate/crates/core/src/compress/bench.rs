use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::grad::{clip_coordinates, DenseGradient};
use crate::rng::substream;

use super::{norm_top_k, sto_klevel, topk_sto_sign, CountSketch, RandomizedHadamard};

/// Inputs of [`compress_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub dim: usize,
    pub trials: usize,
    /// Top-k support size for sign votes and the sketch recovery.
    pub k: usize,
    /// Coordinate clipping bound.
    pub c: f64,
    /// NormTopK energy fraction.
    pub norm_k: f64,
    pub levels: usize,
    pub sketch_rows: usize,
    pub sketch_width: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            trials: 200,
            k: 32,
            c: 1.0,
            norm_k: 0.5,
            levels: 4,
            sketch_rows: 5,
            sketch_width: 128,
            seed: 0,
        }
    }
}

/// Direction fidelity and payload of one compressor over the trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub compressor: String,
    pub dim: usize,
    pub mean_cosine: f64,
    pub std_cosine: f64,
    pub mean_nonzeros: f64,
    pub payload_bits: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}

/// Compresses `trials` Gaussian gradients with every compressor and
/// reports the cosine between each decoded output and its clipped input.
pub fn compress_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.dim == 0 || cfg.trials == 0 {
        return Err(param("dim", "dimension and trials must be >= 1"));
    }
    if cfg.k == 0 || cfg.k > cfg.dim {
        return Err(param("k", format!("must satisfy 1 <= k <= {}", cfg.dim)));
    }
    let rotation = RandomizedHadamard::new(cfg.dim, cfg.seed);
    let index_bits = (cfg.dim as f64).log2().ceil().max(1.0);
    let per_trial: Vec<[(f64, f64); 4]> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<[(f64, f64); 4]> {
            let mut r = substream(cfg.seed, &[t]);
            let g = DenseGradient::new((0..cfg.dim).map(|_| StandardNormal.sample(&mut r)).collect())?;
            let clipped = clip_coordinates(&g, cfg.c)?;
            let target = clipped.values();

            let signs = topk_sto_sign(&g, cfg.c, cfg.k, &mut r)?;
            let a = (cosine(&signs.to_dense(), target), signs.entries().len() as f64);

            let n = norm_top_k(&g, cfg.norm_k)?;
            let nnz = n.values().iter().filter(|v| **v != 0.0).count() as f64;
            let b = (cosine(n.values(), g.values()), nnz);

            let q = sto_klevel(&g, cfg.c, cfg.levels, Some(&rotation), &mut r)?;
            let decoded = if q.is_abstention() { vec![0.0; cfg.dim] } else { rotation.inverse(&q.values()) };
            let c = (cosine(&decoded, target), q.codes().len() as f64);

            let mut sketch = CountSketch::new(cfg.dim, cfg.sketch_rows, cfg.sketch_width, cfg.seed)?;
            sketch.add_dense(&clipped)?;
            let est = sketch.unsketch();
            let top = crate::grad::top_k_of(est.values(), cfg.k)?;
            let mut rec = vec![0.0; cfg.dim];
            for j in top {
                rec[j] = est.values()[j];
            }
            let d = (cosine(&rec, target), cfg.k as f64);
            Ok([a, b, c, d])
        })
        .collect::<Result<_>>()?;
    let names = ["topk_sto_sign", "norm_top_k", "sto_klevel", "count_sketch"];
    let payload = |i: usize, nnz: f64| match i {
        0 => nnz * (index_bits + 1.0),
        1 => nnz * (index_bits + 64.0),
        2 => nnz * (cfg.levels as f64).log2().ceil(),
        _ => (cfg.sketch_rows * cfg.sketch_width * 64) as f64,
    };
    let m = cfg.trials as f64;
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let cos: Vec<f64> = per_trial.iter().map(|row| row[i].0).collect();
            let mean = cos.iter().sum::<f64>() / m;
            let var = if cos.len() > 1 { cos.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
            let nnz = per_trial.iter().map(|row| row[i].1).sum::<f64>() / m;
            BenchRow {
                compressor: name.to_string(),
                dim: cfg.dim,
                mean_cosine: mean,
                std_cosine: var.sqrt(),
                mean_nonzeros: nnz,
                payload_bits: payload(i, nnz),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_rows_are_sane() {
        let rows = compress_bench(&BenchConfig { trials: 20, ..BenchConfig::default() }).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.mean_cosine > 0.0 && r.mean_cosine <= 1.0 + 1e-12, "{r:?}");
        }
        assert_eq!(rows[0].mean_nonzeros, 32.0);
        assert_eq!(rows, compress_bench(&BenchConfig { trials: 20, ..BenchConfig::default() }).unwrap());
        assert!(compress_bench(&BenchConfig { k: 0, ..BenchConfig::default() }).is_err());
    }
}
