//! Teacher discriminators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grad::DenseGradient;

use super::net::{Mlp, Scratch};

/// A record with its class label; the label is ignored by unconditional teachers.
pub type Sample<'a> = (&'a [f64], usize);

/// Discriminator `Γ(x) = sigmoid(net(x))`. A class-conditional teacher has
/// one output head per class and `Γ(x, y)` reads head `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherModel {
    net: Mlp,
    dim: usize,
    classes: usize,
    partition: usize,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl TeacherModel {
    /// Randomly initialized teacher with `hidden` tanh units (0 gives a
    /// logistic discriminator). `classes = 0` disables label conditioning.
    pub fn new<R: Rng + ?Sized>(dim: usize, classes: usize, hidden: usize, partition: usize, rng: &mut R) -> Self {
        Self { net: Mlp::new(dim, hidden, classes.max(1), rng), dim, classes, partition }
    }

    /// Unconditional `Γ(x) = sigmoid(w·x + b)`.
    pub fn logistic(weights: Vec<f64>, bias: f64, partition: usize) -> Self {
        let dim = weights.len();
        Self { net: Mlp::linear(dim, 1, weights, vec![bias]), dim, classes: 0, partition }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partition(&self) -> usize {
        self.partition
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.net.set_params(p);
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite()
    }

    fn head(&self, label: usize) -> usize {
        if self.classes == 0 {
            0
        } else {
            assert!(label < self.classes, "label out of range");
            label
        }
    }

    fn logit(&self, x: &[f64], label: usize) -> f64 {
        assert_eq!(x.len(), self.dim, "record dimension");
        self.net.apply(x)[self.head(label)]
    }

    /// Backpropagates through head `label`, with `∂L/∂logit` given as a
    /// function of `Γ`; leaves `∂L/∂x` in `s.dx`.
    fn backprop(&self, x: &[f64], label: usize, ds: impl Fn(f64) -> f64, s: &mut Scratch, dout: &mut Vec<f64>, grad: &mut [f64]) {
        assert_eq!(x.len(), self.dim, "record dimension");
        self.net.forward(x, s);
        let h = self.head(label);
        dout.clear();
        dout.resize(s.out.len(), 0.0);
        dout[h] = ds(sigmoid(s.out[h]));
        self.net.backward(x, s, dout, grad);
    }

    /// `Γ(x)`.
    pub fn gamma(&self, x: &[f64], label: usize) -> f64 {
        sigmoid(self.logit(x, label))
    }

    /// `−mean log Γ(real) − mean log(1 − Γ(fake))`.
    pub fn loss(&self, real: &[Sample<'_>], fake: &[Sample<'_>]) -> f64 {
        let r: f64 = real.iter().map(|&(x, y)| softplus(-self.logit(x, y))).sum::<f64>();
        let f: f64 = fake.iter().map(|&(x, y)| softplus(self.logit(x, y))).sum::<f64>();
        r / real.len().max(1) as f64 + f / fake.len().max(1) as f64
    }

    /// Parameter gradient of [`TeacherModel::loss`].
    pub fn loss_gradient(&self, real: &[Sample<'_>], fake: &[Sample<'_>]) -> Vec<f64> {
        let mut grad = vec![0.0; self.net.param_count()];
        let (mut s, mut dout) = (Scratch::default(), Vec::new());
        let wr = 1.0 / real.len().max(1) as f64;
        let wf = 1.0 / fake.len().max(1) as f64;
        for &(x, y) in real {
            self.backprop(x, y, |p| (p - 1.0) * wr, &mut s, &mut dout, &mut grad);
        }
        for &(x, y) in fake {
            self.backprop(x, y, |p| p * wf, &mut s, &mut dout, &mut grad);
        }
        grad
    }

    /// `g = −∂ log Γ(a)/∂a` at `a = x`.
    pub fn record_gradient(&self, x: &[f64], label: usize) -> DenseGradient {
        let mut grad = vec![0.0; self.net.param_count()];
        let (mut s, mut dout) = (Scratch::default(), Vec::new());
        self.backprop(x, label, |p| p - 1.0, &mut s, &mut dout, &mut grad);
        DenseGradient::new(s.dx).expect("finite teacher gradient")
    }
}

/// One gradient-descent step on the discriminator loss.
pub fn teacher_step(t: &TeacherModel, real: &[Sample<'_>], fake: &[Sample<'_>], lr: f64) -> TeacherModel {
    let mut next = t.clone();
    if lr != 0.0 {
        next.net.descend(&t.loss_gradient(real, fake), lr);
    }
    next
}

/// `−∂ log Γ(a)/∂a` at the synthetic record.
pub fn teacher_gradient(t: &TeacherModel, x: &[f64], label: usize) -> DenseGradient {
    t.record_gradient(x, label)
}
