//! Student side: record updates and the optional generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::TernaryGradient;

use super::net::{Mlp, Scratch};

/// `x̂ + γ·ḡ`.
pub fn student_update(record: &[f64], g: &TernaryGradient, gamma: f64) -> Vec<f64> {
    assert_eq!(record.len(), g.dim(), "record dimension");
    record
        .iter()
        .zip(g.values())
        .map(|(&x, &s)| x + gamma * f64::from(s))
        .collect()
}

/// `Ψ(z, y)`: maps a latent sample (plus a one-hot label when conditional)
/// to a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    net: Mlp,
    latent: usize,
    classes: usize,
}

impl Generator {
    /// `hidden = 0` gives a linear generator.
    pub fn new<R: Rng + ?Sized>(latent: usize, classes: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        Self { net: Mlp::new(latent + classes, hidden, dim, rng), latent, classes }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.net.set_params(p);
    }

    fn input(&self, z: &[f64], label: usize) -> Vec<f64> {
        assert_eq!(z.len(), self.latent, "latent dimension");
        let mut v = z.to_vec();
        v.extend((0..self.classes).map(|c| if c == label { 1.0 } else { 0.0 }));
        v
    }

    pub fn generate(&self, z: &[f64], label: usize) -> Vec<f64> {
        self.net.apply(&self.input(z, label))
    }

    /// `(1/m) Σ_j ‖Ψ(z_j) − x̂_j‖²`.
    pub fn loss(&self, z: &[Vec<f64>], labels: &[usize], targets: &[Vec<f64>]) -> f64 {
        let m = z.len().max(1) as f64;
        z.iter()
            .zip(labels)
            .zip(targets)
            .map(|((zj, &y), t)| {
                self.generate(zj, y).iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / m
    }

    /// Parameter gradient of [`Generator::loss`].
    pub fn loss_gradient(&self, z: &[Vec<f64>], labels: &[usize], targets: &[Vec<f64>]) -> Vec<f64> {
        let m = z.len().max(1) as f64;
        let mut grad = vec![0.0; self.net.param_count()];
        let mut s = Scratch::default();
        for ((zj, &y), t) in z.iter().zip(labels).zip(targets) {
            let input = self.input(zj, y);
            self.net.forward(&input, &mut s);
            let dout: Vec<f64> = s.out.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / m).collect();
            self.net.backward(&input, &mut s, &dout, &mut grad);
        }
        grad
    }
}

/// `steps` full-batch descent steps on the squared error to `targets`.
pub fn generator_fit(
    g: &Generator,
    z: &[Vec<f64>],
    labels: &[usize],
    targets: &[Vec<f64>],
    lr: f64,
    steps: usize,
) -> Generator {
    let mut cur = g.clone();
    for _ in 0..steps {
        let grad = cur.loss_gradient(z, labels, targets);
        if grad.iter().all(|&v| v == 0.0) {
            break;
        }
        cur.net.descend(&grad, lr);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn tern(v: &[i8]) -> TernaryGradient {
        TernaryGradient::new(v.to_vec()).unwrap()
    }

    #[test]
    fn update_examples() {
        assert_eq!(student_update(&[0.0, 0.0], &tern(&[1, -1]), 0.1), vec![0.1, -0.1]);
        assert_eq!(student_update(&[0.3, 0.4], &tern(&[0, 0]), 0.1), vec![0.3, 0.4]);
        let a = tern(&[1, -1, 0]);
        let b = tern(&[1, 1, -1]);
        let twice = student_update(&student_update(&[0.0; 3], &a, 0.25), &b, 0.25);
        let sum: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| 0.25 * f64::from(x + y)).collect();
        assert_eq!(twice, sum);
    }

    fn setup(hidden: usize) -> (Generator, Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>) {
        let mut r = stream(11);
        let g = Generator::new(3, 2, hidden, 2, &mut r);
        let z: Vec<Vec<f64>> =
            (0..6).map(|_| (0..3).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
        let labels: Vec<usize> = (0..6).map(|i| i % 2).collect();
        let targets: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, 1.0 - i as f64 * 0.2]).collect();
        (g, z, labels, targets)
    }

    #[test]
    fn fixed_point_when_targets_are_outputs() {
        let (g, z, labels, _) = setup(4);
        let out: Vec<Vec<f64>> = z.iter().zip(&labels).map(|(zj, &y)| g.generate(zj, y)).collect();
        assert_eq!(generator_fit(&g, &z, &labels, &out, 0.1, 10), g);
    }

    #[test]
    fn linear_fit_descends() {
        let (g, z, labels, targets) = setup(0);
        let mut cur = g;
        let mut prev = cur.loss(&z, &labels, &targets);
        for _ in 0..100 {
            cur = generator_fit(&cur, &z, &labels, &targets, 0.02, 1);
            let l = cur.loss(&z, &labels, &targets);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for hidden in [0, 5] {
            let (g, z, labels, targets) = setup(hidden);
            let grad = g.loss_gradient(&z, &labels, &targets);
            let p = g.params();
            let h = 1e-6;
            for i in 0..p.len() {
                let mut up = g.clone();
                let mut dn = g.clone();
                let mut q = p.clone();
                q[i] += h;
                up.set_params(&q);
                q[i] -= 2.0 * h;
                dn.set_params(&q);
                let fd = (up.loss(&z, &labels, &targets) - dn.loss(&z, &labels, &targets)) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "param {i}");
            }
        }
    }
}
