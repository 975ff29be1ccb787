//! DP-SGD with NormTopK compression and the compression/noise control grid.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{Mechanism, OrderGrid, PrivacyLedger, Track};
use crate::compress::norm_top_k;
use crate::error::{param, Error, Result};
use crate::grad::{clip_l2, DenseGradient};
use crate::pate::net::Scratch;
use crate::pate::Mlp;
use crate::rng::substream;

const TAG_DATA: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_BATCH: u64 = 4;
const TAG_NOISE: u64 = 5;

/// Cells of the control experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Clipping only.
    ClippedSGD,
    /// Clipping and NormTopK, no noise.
    #[serde(rename = "TopK_SGD")]
    TopKSGD,
    /// Clipping, NormTopK, noise variance `σ²C²`.
    #[serde(rename = "TopK_GM_DP")]
    TopKGmDp,
    /// Clipping, NormTopK, noise variance `kσ²C²`.
    #[serde(rename = "TopAgg_SGD")]
    TopAggSGD,
    /// Clipping and noise variance `σ²C²`, no compression.
    #[serde(rename = "GM_DP")]
    GmDp,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::ClippedSGD, Scenario::TopKSGD, Scenario::TopKGmDp, Scenario::TopAggSGD, Scenario::GmDp];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ClippedSGD => "ClippedSGD",
            Scenario::TopKSGD => "TopK_SGD",
            Scenario::TopKGmDp => "TopK_GM_DP",
            Scenario::TopAggSGD => "TopAgg_SGD",
            Scenario::GmDp => "GM_DP",
        }
    }

    pub fn compresses(&self) -> bool {
        matches!(self, Scenario::TopKSGD | Scenario::TopKGmDp | Scenario::TopAggSGD)
    }

    pub fn is_private(&self) -> bool {
        matches!(self, Scenario::TopKGmDp | Scenario::TopAggSGD | Scenario::GmDp)
    }

    /// Per-coordinate variance of the noise added to the summed batch.
    pub fn noise_variance(&self, sigma: f64, clip: f64, k: f64) -> f64 {
        let base = sigma * sigma * clip * clip;
        match self {
            Scenario::ClippedSGD | Scenario::TopKSGD => 0.0,
            Scenario::TopKGmDp | Scenario::GmDp => base,
            Scenario::TopAggSGD => k * base,
        }
    }

    /// Noise standard deviation over the per-sample sensitivity (`√k·C`
    /// when compressed, `C` otherwise).
    pub fn noise_multiplier(&self, sigma: f64, k: f64) -> Option<f64> {
        match self {
            Scenario::TopKGmDp => Some(sigma / k.sqrt()),
            Scenario::TopAggSGD | Scenario::GmDp => Some(sigma),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// Model trained on the synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Logistic regression with a bias term (convex).
    Logistic,
    /// One tanh hidden layer with a logistic output (nonconvex).
    Mlp { hidden: usize },
}

/// Two-class synthetic classification data with labels drawn from a
/// logistic model.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    dim: usize,
    model: ModelKind,
    x: Vec<f64>,
    y: Vec<f64>,
    test_x: Vec<f64>,
    test_y: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−y ln σ(z) − (1−y) ln(1−σ(z))`, stable in `z`.
fn logistic_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

impl SyntheticTask {
    pub fn generate(n: usize, n_test: usize, dim: usize, model: ModelKind, seed: u64) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(param("n", "task needs samples and features"));
        }
        let mut r = substream(seed, &[TAG_DATA]);
        let w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let scale = 2.0 / (dim as f64).sqrt();
        let draw = |count: usize, r: &mut crate::rng::Stream| {
            let mut xs = Vec::with_capacity(count * dim);
            let mut ys = Vec::with_capacity(count);
            for _ in 0..count {
                let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
                let p = sigmoid(scale * x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
                ys.push(if r.random::<f64>() < p { 1.0 } else { 0.0 });
                xs.extend(x);
            }
            (xs, ys)
        };
        let (x, y) = draw(n, &mut r);
        let (test_x, test_y) = draw(n_test, &mut substream(seed, &[TAG_TEST]));
        Ok(Self { dim, model, x, y, test_x, test_y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    fn mlp(&self, hidden: usize) -> Mlp {
        Mlp::new(self.dim, hidden, 1, &mut substream(0, &[]))
    }

    pub fn param_dim(&self) -> usize {
        match self.model {
            ModelKind::Logistic => self.dim + 1,
            ModelKind::Mlp { hidden } => self.mlp(hidden).param_count(),
        }
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        match self.model {
            ModelKind::Logistic => vec![0.0; self.dim + 1],
            ModelKind::Mlp { hidden } => {
                Mlp::new(self.dim, hidden, 1, &mut substream(seed, &[TAG_INIT])).params()
            }
        }
    }

    fn row<'a>(xs: &'a [f64], dim: usize, i: usize) -> &'a [f64] {
        &xs[i * dim..(i + 1) * dim]
    }

    fn logits(&self, params: &[f64], xs: &[f64]) -> Vec<f64> {
        let n = xs.len() / self.dim;
        match self.model {
            ModelKind::Logistic => (0..n)
                .map(|i| {
                    let x = Self::row(xs, self.dim, i);
                    params[self.dim] + x.iter().zip(params).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect(),
            ModelKind::Mlp { hidden } => {
                let mut net = self.mlp(hidden);
                net.set_params(params);
                (0..n).map(|i| net.apply(Self::row(xs, self.dim, i))[0]).collect()
            }
        }
    }

    /// Mean training loss.
    pub fn loss(&self, params: &[f64]) -> f64 {
        let z = self.logits(params, &self.x);
        z.iter().zip(&self.y).map(|(&z, &y)| logistic_loss(z, y)).sum::<f64>() / self.len() as f64
    }

    /// Held-out accuracy.
    pub fn accuracy(&self, params: &[f64]) -> f64 {
        let z = self.logits(params, &self.test_x);
        if z.is_empty() {
            return 0.0;
        }
        let hits = z.iter().zip(&self.test_y).filter(|(&z, &y)| (z >= 0.0) == (y == 1.0)).count();
        hits as f64 / z.len() as f64
    }

    /// Per-sample loss gradients, in batch order.
    pub fn sample_gradients(&self, params: &[f64], batch: &[usize]) -> Vec<DenseGradient> {
        let net = match self.model {
            ModelKind::Mlp { hidden } => {
                let mut net = self.mlp(hidden);
                net.set_params(params);
                Some(net)
            }
            ModelKind::Logistic => None,
        };
        batch
            .par_iter()
            .map(|&i| {
                let x = Self::row(&self.x, self.dim, i);
                let y = self.y[i];
                let g = match &net {
                    None => {
                        let z = params[self.dim] + x.iter().zip(params).map(|(a, b)| a * b).sum::<f64>();
                        let e = sigmoid(z) - y;
                        let mut g: Vec<f64> = x.iter().map(|v| e * v).collect();
                        g.push(e);
                        g
                    }
                    Some(net) => {
                        let mut s = Scratch::default();
                        net.forward(x, &mut s);
                        let e = sigmoid(s.out[0]) - y;
                        let mut g = vec![0.0; net.param_count()];
                        net.backward(x, &mut s, &[e], &mut g);
                        g
                    }
                };
                DenseGradient::new(g).expect("finite gradient")
            })
            .collect()
    }
}

/// Inputs of [`run_sgd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    /// Expected batch size `B`; sampling rate is `B/n`.
    pub batch_size: usize,
    pub lr: f64,
    /// Noise scale σ.
    pub sigma: f64,
    /// Per-sample clipping norm `C`.
    pub clip: f64,
    /// NormTopK energy fraction `k ∈ (0, 1]`.
    pub k: f64,
    pub epochs: usize,
    pub delta: f64,
    pub seed: u64,
    pub scenario: Scenario,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            lr: 0.1,
            sigma: 4.0,
            clip: 1.0,
            k: 0.5,
            epochs: 10,
            delta: 1e-5,
            seed: 0,
            scenario: Scenario::TopAggSGD,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(param("batch_size", format!("must lie in [1, {n}]")));
        }
        if !(self.lr > 0.0) {
            return Err(param("lr", "must be > 0"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(param("sigma", "must be finite and >= 0"));
        }
        if !(self.clip > 0.0) {
            return Err(param("clip", "must be > 0"));
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(param("k", format!("must lie in (0, 1], got {}", self.k)));
        }
        if self.epochs == 0 {
            return Err(param("epochs", "must be >= 1"));
        }
        if self.scenario.is_private() && self.sigma == 0.0 {
            return Err(Error::InfiniteBudget);
        }
        Ok(())
    }

    /// `T·(n/B)` steps.
    pub fn steps(&self, n: usize) -> u64 {
        (self.epochs * n / self.batch_size) as u64
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub samples: usize,
    /// NormTopK outputs that were zero for a nonzero input.
    pub degenerate: usize,
    pub max_contribution: f64,
}

/// Clip (ℓ₂, `clip`), optionally NormTopK (`k`), sum in order, add
/// `N(0, noise_var)` per coordinate and divide by `divisor`.
pub fn private_mean<R: Rng + ?Sized>(
    grads: &[DenseGradient],
    dim: usize,
    clip: f64,
    k: f64,
    compress: bool,
    noise_var: f64,
    divisor: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, StepStats)> {
    let processed: Vec<DenseGradient> = grads
        .par_iter()
        .map(|g| {
            let c = clip_l2(g, clip)?;
            if compress { norm_top_k(&c, k) } else { Ok(c) }
        })
        .collect::<Result<_>>()?;
    let bound = if compress { k.sqrt() * clip } else { clip };
    let mut stats = StepStats { samples: grads.len(), ..StepStats::default() };
    let mut sum = vec![0.0; dim];
    for (orig, p) in grads.iter().zip(&processed) {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.dim() });
        }
        let norm = p.l2_norm();
        assert!(norm <= bound * (1.0 + 1e-12), "per-sample contribution {norm} exceeds {bound}");
        stats.max_contribution = stats.max_contribution.max(norm);
        if compress && p.is_zero() && !orig.is_zero() {
            stats.degenerate += 1;
        }
        for (s, v) in sum.iter_mut().zip(p.values()) {
            *s += v;
        }
    }
    if noise_var > 0.0 {
        let noise = Normal::new(0.0, noise_var.sqrt()).map_err(|e| param("noise", e.to_string()))?;
        for s in sum.iter_mut() {
            *s += noise.sample(rng);
        }
    }
    for s in sum.iter_mut() {
        *s /= divisor;
    }
    Ok((sum, stats))
}

/// One DP-SGD step on `batch`: returns the updated parameters.
pub fn dpsgd_step<R: Rng + ?Sized>(
    task: &SyntheticTask,
    params: &[f64],
    batch: &[usize],
    cfg: &SgdConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, StepStats)> {
    let grads = task.sample_gradients(params, batch);
    let var = cfg.scenario.noise_variance(cfg.sigma, cfg.clip, cfg.k);
    let (g, stats) = private_mean(
        &grads,
        params.len(),
        cfg.clip,
        cfg.k,
        cfg.scenario.compresses(),
        var,
        cfg.batch_size as f64,
        rng,
    )?;
    Ok((params.iter().zip(&g).map(|(x, d)| x - cfg.lr * d).collect(), stats))
}

/// Independent inclusion of every index with probability `q`.
pub fn poisson_batch<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<f64>() < q).collect()
}

/// Result of [`run_sgd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdRun {
    pub scenario: Scenario,
    pub seed: u64,
    pub final_loss: f64,
    pub accuracy: f64,
    pub epsilon: Option<f64>,
    pub steps: u64,
    pub degenerate_outputs: usize,
    pub params: Vec<f64>,
    /// Composed mechanism, for recomputation.
    pub mechanism: Option<Mechanism>,
}

/// Trains from `task.init_params(seed)` for `T·(n/B)` Poisson-sampled steps.
pub fn run_sgd(task: &SyntheticTask, cfg: &SgdConfig) -> Result<SgdRun> {
    let n = task.len();
    cfg.validate(n)?;
    let q = cfg.batch_size as f64 / n as f64;
    let steps = cfg.steps(n);
    let mut params = task.init_params(cfg.seed);
    let mut degenerate = 0;
    for t in 0..steps {
        let batch = poisson_batch(n, q, &mut substream(cfg.seed, &[TAG_BATCH, t]));
        let (next, stats) = dpsgd_step(task, &params, &batch, cfg, &mut substream(cfg.seed, &[TAG_NOISE, t]))?;
        params = next;
        degenerate += stats.degenerate;
    }
    let mechanism = cfg
        .scenario
        .noise_multiplier(cfg.sigma, cfg.k)
        .map(|noise_multiplier| Mechanism::SampledGaussian { q, noise_multiplier, steps });
    let epsilon = match &mechanism {
        Some(m) => {
            let mut ledger = PrivacyLedger::new(OrderGrid::integer(), cfg.delta)?;
            ledger.compose(m.clone())?;
            Some(ledger.epsilon(Track::Independent).0)
        }
        None => None,
    };
    Ok(SgdRun {
        scenario: cfg.scenario,
        seed: cfg.seed,
        final_loss: task.loss(&params),
        accuracy: task.accuracy(&params),
        epsilon,
        steps,
        degenerate_outputs: degenerate,
        params,
        mechanism,
    })
}

/// The synthetic task of a control experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub samples: usize,
    pub test_samples: usize,
    pub features: usize,
    pub model: ModelKind,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self { samples: 1000, test_samples: 500, features: 20, model: ModelKind::Logistic }
    }
}

/// One CSV row of the control experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub scenario: Scenario,
    pub seed: u64,
    pub final_loss: f64,
    pub accuracy: f64,
    pub epsilon: Option<f64>,
    pub sigma: f64,
    #[serde(rename = "C")]
    pub clip: f64,
    pub k: f64,
    #[serde(rename = "B")]
    pub batch_size: usize,
    pub lr: f64,
}

/// Mean and sample standard deviation of one scenario's final losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSummary {
    pub scenario: Scenario,
    pub runs: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub epsilon: Option<f64>,
    pub degenerate_outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTable {
    pub rows: Vec<ControlRow>,
    pub summary: Vec<ControlSummary>,
}

impl ControlTable {
    pub fn summary_for(&self, s: Scenario) -> Option<&ControlSummary> {
        self.summary.iter().find(|c| c.scenario == s)
    }

    /// Paired per-seed losses of one scenario, in seed order.
    pub fn losses(&self, s: Scenario) -> Vec<f64> {
        self.rows.iter().filter(|r| r.scenario == s).map(|r| r.final_loss).collect()
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Runs every scenario on every seed with shared `C`, `σ`, `k` and step
/// count. Seed `s` fixes the data, initialization, batches and noise draws
/// for all scenarios alike.
pub fn run_control_experiment(
    task: &TaskSpec,
    scenarios: &[Scenario],
    seeds: &[u64],
    base: &SgdConfig,
) -> Result<ControlTable> {
    if scenarios.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("scenarios and seeds"));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let tasks: Vec<SyntheticTask> = seeds
        .iter()
        .map(|&s| SyntheticTask::generate(task.samples, task.test_samples, task.features, task.model, s))
        .collect::<Result<_>>()?;
    for &scenario in scenarios {
        let mut losses = Vec::new();
        let mut accs = Vec::new();
        let mut degenerate = 0;
        let mut epsilon = None;
        for (t, &seed) in tasks.iter().zip(seeds) {
            let cfg = SgdConfig { seed, scenario, ..base.clone() };
            let run = run_sgd(t, &cfg)?;
            losses.push(run.final_loss);
            accs.push(run.accuracy);
            degenerate += run.degenerate_outputs;
            epsilon = run.epsilon;
            rows.push(ControlRow {
                scenario,
                seed,
                final_loss: run.final_loss,
                accuracy: run.accuracy,
                epsilon: run.epsilon,
                sigma: cfg.sigma,
                clip: cfg.clip,
                k: cfg.k,
                batch_size: cfg.batch_size,
                lr: cfg.lr,
            });
        }
        let (mean_loss, std_loss) = mean_std(&losses);
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        summary.push(ControlSummary {
            scenario,
            runs: losses.len(),
            mean_loss,
            std_loss,
            mean_accuracy,
            std_accuracy,
            epsilon,
            degenerate_outputs: degenerate,
        });
    }
    Ok(ControlTable { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn g(v: &[f64]) -> DenseGradient {
        DenseGradient::new(v.to_vec()).unwrap()
    }

    #[test]
    fn hand_example_direction() {
        let (mean, stats) =
            private_mean(&[g(&[2.0, 0.0]), g(&[0.0, 0.5])], 2, 1.0, 1.0, true, 0.0, 2.0, &mut stream(0)).unwrap();
        assert_eq!(mean, vec![0.5, 0.25]);
        assert_eq!(stats.degenerate, 0);
    }

    #[test]
    fn scenario_noise_table() {
        let (s, c, k) = (2.0, 0.5, 0.25);
        assert_eq!(Scenario::ClippedSGD.noise_variance(s, c, k), 0.0);
        assert_eq!(Scenario::TopKSGD.noise_variance(s, c, k), 0.0);
        assert_eq!(Scenario::TopKGmDp.noise_variance(s, c, k), 1.0);
        assert_eq!(Scenario::GmDp.noise_variance(s, c, k), 1.0);
        assert_eq!(Scenario::TopAggSGD.noise_variance(s, c, k), 0.25);
        assert!(!Scenario::GmDp.compresses());
        assert_eq!("topagg_sgd".parse::<Scenario>().unwrap(), Scenario::TopAggSGD);
    }

    #[test]
    fn injected_noise_variance() {
        let (sigma, clip, k) = (1.5, 0.8, 0.3);
        let var = Scenario::TopAggSGD.noise_variance(sigma, clip, k);
        let zero = [g(&[0.0, 0.0])];
        let mut r = stream(4);
        let n = 100_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let (m, _) = private_mean(&zero, 2, clip, k, true, var, 1.0, &mut r).unwrap();
            s2 += m[0] * m[0];
        }
        let est = s2 / n as f64;
        let se = var * (2.0 / n as f64).sqrt();
        assert!((est - var).abs() <= 4.0 * se, "{est} vs {var}");
    }

    #[test]
    fn identity_transforms_give_plain_sgd() {
        let task = SyntheticTask::generate(200, 10, 5, ModelKind::Logistic, 3).unwrap();
        let cfg = SgdConfig {
            scenario: Scenario::TopKSGD,
            k: 1.0,
            sigma: 0.0,
            clip: 1e6,
            batch_size: 20,
            epochs: 2,
            ..SgdConfig::default()
        };
        let run = run_sgd(&task, &cfg).unwrap();
        let q = 20.0 / 200.0;
        let mut p = task.init_params(cfg.seed);
        for t in 0..cfg.steps(200) {
            let batch = poisson_batch(200, q, &mut substream(cfg.seed, &[TAG_BATCH, t]));
            let grads = task.sample_gradients(&p, &batch);
            let mut sum = vec![0.0; p.len()];
            for gr in &grads {
                for (s, v) in sum.iter_mut().zip(gr.values()) {
                    *s += v;
                }
            }
            for (x, s) in p.iter_mut().zip(&sum) {
                *x -= cfg.lr * s / 20.0;
            }
        }
        for (a, b) in run.params.iter().zip(&p) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for model in [ModelKind::Logistic, ModelKind::Mlp { hidden: 4 }] {
            let task = SyntheticTask::generate(1, 1, 3, model, 9).unwrap();
            let p: Vec<f64> = task.init_params(2).iter().enumerate().map(|(i, v)| v + 0.1 * i as f64).collect();
            let grad = task.sample_gradients(&p, &[0]).remove(0);
            for i in 0..p.len() {
                let h = 1e-6;
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (task.loss(&a) - task.loss(&b)) / (2.0 * h);
                let got = grad.values()[i];
                assert!((fd - got).abs() <= 1e-6 * fd.abs().max(1e-3), "{model:?} param {i}: {fd} vs {got}");
            }
        }
    }

    #[test]
    fn epsilon_recomputes_from_mechanism() {
        let task = SyntheticTask::generate(200, 10, 4, ModelKind::Logistic, 1).unwrap();
        let cfg = SgdConfig { batch_size: 20, epochs: 3, sigma: 1.0, ..SgdConfig::default() };
        let run = run_sgd(&task, &cfg).unwrap();
        assert_eq!(run.steps, 30);
        let Some(Mechanism::SampledGaussian { q, noise_multiplier, steps }) = run.mechanism.clone() else {
            panic!("private run records its mechanism");
        };
        assert_eq!((q, noise_multiplier, steps), (0.1, 1.0, 30));
        let grid = OrderGrid::integer();
        let eps = grid
            .orders()
            .iter()
            .map(|&o| {
                30.0 * crate::accountant::sampled_gaussian_rdp(0.1, 1.0, o).unwrap() + (1e5f64).ln() / (o - 1.0)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((run.epsilon.unwrap() - eps).abs() <= 1e-12 * eps);
        assert!(run_sgd(&task, &SgdConfig { scenario: Scenario::ClippedSGD, ..cfg }).unwrap().epsilon.is_none());
    }
}
