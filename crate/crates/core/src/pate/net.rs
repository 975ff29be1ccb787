//! Tiny dense network: optional tanh hidden layer, linear output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// `y = W2·tanh(W1·x + b1) + b2`, or `y = W2·x + b2` when `hidden = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    output: usize,
    /// Row-major `hidden × input`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row-major `output × width`, `width = hidden` or `input`.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    hidden: Vec<f64>,
    pub(crate) out: Vec<f64>,
    dfeat: Vec<f64>,
    pub(crate) dx: Vec<f64>,
}

impl Mlp {
    /// Glorot-style Gaussian initialization, zero biases.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let width = if hidden == 0 { input } else { hidden };
        let draw = |fan_in: usize, fan_out: usize, n: usize, rng: &mut R| -> Vec<f64> {
            let sd = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Normal::new(0.0, sd).expect("finite sd");
            (0..n).map(|_| dist.sample(rng)).collect()
        };
        let w1 = draw(input, hidden.max(1), hidden * input, rng);
        let w2 = draw(width, output, output * width, rng);
        Self { input, hidden, output, w1, b1: vec![0.0; hidden], w2, b2: vec![0.0; output] }
    }

    /// Linear map with the given row-major weights and bias.
    pub fn linear(input: usize, output: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weights.len(), input * output);
        assert_eq!(bias.len(), output);
        Self { input, hidden: 0, output, w1: vec![], b1: vec![], w2: weights, b2: bias }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters in a fixed order: `w1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// `params ← params − lr·grad`.
    pub fn descend(&mut self, grad: &[f64], lr: f64) {
        assert_eq!(grad.len(), self.param_count());
        let parts = [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2];
        let mut offset = 0;
        for part in parts {
            for (x, g) in part.iter_mut().zip(&grad[offset..]) {
                *x -= lr * g;
            }
            offset += part.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2].iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Forward pass; leaves the output in `s.out`.
    pub(crate) fn forward(&self, x: &[f64], s: &mut Scratch) {
        debug_assert_eq!(x.len(), self.input);
        s.hidden.clear();
        s.hidden.extend((0..self.hidden).map(|h| {
            let row = &self.w1[h * self.input..(h + 1) * self.input];
            (dot(row, x) + self.b1[h]).tanh()
        }));
        let feat = if self.hidden == 0 { x } else { &s.hidden[..] };
        let width = feat.len();
        s.out.clear();
        s.out
            .extend((0..self.output).map(|o| dot(&self.w2[o * width..(o + 1) * width], feat) + self.b2[o]));
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut s = Scratch::default();
        self.forward(x, &mut s);
        s.out
    }

    /// Backpropagates `dout = ∂L/∂y` after [`Mlp::forward`] on the same `x`,
    /// accumulating `∂L/∂params` into `grad` (layout of [`Mlp::params`]) and
    /// leaving `∂L/∂x` in `s.dx`.
    pub(crate) fn backward(&self, x: &[f64], s: &mut Scratch, dout: &[f64], grad: &mut [f64]) {
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        let feat = if self.hidden == 0 { x } else { &s.hidden[..] };
        let width = feat.len();
        s.dfeat.clear();
        s.dfeat.resize(width, 0.0);
        for o in 0..self.output {
            let d = dout[o];
            if d == 0.0 {
                continue;
            }
            gb2[o] += d;
            let row = &self.w2[o * width..(o + 1) * width];
            let grow = &mut gw2[o * width..(o + 1) * width];
            for i in 0..width {
                grow[i] += d * feat[i];
                s.dfeat[i] += d * row[i];
            }
        }
        if self.hidden == 0 {
            std::mem::swap(&mut s.dx, &mut s.dfeat);
            return;
        }
        s.dx.clear();
        s.dx.resize(self.input, 0.0);
        for h in 0..self.hidden {
            let a = s.hidden[h];
            let dz = s.dfeat[h] * (1.0 - a * a);
            gb1[h] += dz;
            let row = &self.w1[h * self.input..(h + 1) * self.input];
            let grow = &mut gw1[h * self.input..(h + 1) * self.input];
            for i in 0..self.input {
                grow[i] += dz * x[i];
                s.dx[i] += dz * row[i];
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
