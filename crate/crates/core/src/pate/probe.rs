//! Held-out utility probe: L2-regularized softmax regression.

use serde::{Deserialize, Serialize};

use super::data::Dataset;

/// Probe training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub l2: f64,
    pub lr: f64,
    pub steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { l2: 1e-3, lr: 0.5, steps: 200 }
    }
}

/// Multinomial logistic regression; two classes reduce to ordinary logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxProbe {
    dim: usize,
    classes: usize,
    /// Row-major `classes × (dim + 1)`, bias last.
    weights: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

impl SoftmaxProbe {
    /// Full-batch gradient descent from zero weights.
    pub fn train(records: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &ProbeConfig) -> Self {
        let dim = records.first().map_or(0, |r| r.len());
        let stride = dim + 1;
        let mut weights = vec![0.0; classes * stride];
        let n = records.len().max(1) as f64;
        let mut grad = vec![0.0; weights.len()];
        let mut probs = vec![0.0; classes];
        for _ in 0..cfg.steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, &y) in records.iter().zip(labels) {
                for (c, p) in probs.iter_mut().enumerate() {
                    let w = &weights[c * stride..(c + 1) * stride];
                    *p = w[dim] + w[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
                softmax_in_place(&mut probs);
                for c in 0..classes {
                    let e = probs[c] - if c == y { 1.0 } else { 0.0 };
                    let row = &mut grad[c * stride..(c + 1) * stride];
                    for (g, xi) in row[..dim].iter_mut().zip(x) {
                        *g += e * xi / n;
                    }
                    row[dim] += e / n;
                }
            }
            for (i, (w, g)) in weights.iter_mut().zip(&grad).enumerate() {
                let reg = if i % stride == dim { 0.0 } else { cfg.l2 * *w };
                *w -= cfg.lr * (g + reg);
            }
        }
        Self { dim, classes, weights }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let stride = self.dim + 1;
        (0..self.classes)
            .map(|c| {
                let w = &self.weights[c * stride..(c + 1) * stride];
                w[self.dim] + w[..self.dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, s)| if s > best.1 { (c, s) } else { best })
            .0
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.len()).filter(|&i| self.predict(data.record(i)) == data.label(i)).count();
        hits as f64 / data.len() as f64
    }
}
