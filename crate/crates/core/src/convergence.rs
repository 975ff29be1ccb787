//! Empirical check of the top-k convergence bound on synthetic objectives.
//!
//! A run executes
//! `x ← x − (γ/N)·Σ_n (Q(clip(top-k(F_n'(x)), c)) + N(0, A·k))`
//! while recording the gradient of `f = (1/N) Σ F_n` and the constants the
//! bound depends on. Constants are trajectory-empirical: suprema are taken
//! over the visited iterates only.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grad::top_k_of;
use crate::rng::{substream, Stream};

const TAG_OBJECTIVE: u64 = 1;
const TAG_X0: u64 = 2;
const TAG_STEP: u64 = 3;

/// How [`ConvergenceConfig`] builds its objective from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `F_n(x) = ½‖x − b_n‖²` with `b_n ~ N(0, spread²·I)`.
    Quadratic { spread: f64 },
    /// Mean logistic loss over a shard of `samples` Gaussian records per worker.
    Logistic { samples: usize },
}

/// A finite-sum objective split over workers.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic { targets: Vec<Vec<f64>> },
    Logistic { shards: Vec<(Vec<Vec<f64>>, Vec<f64>)> },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

impl Objective {
    pub fn quadratic(targets: Vec<Vec<f64>>) -> Result<Self> {
        let d = targets.first().map(Vec::len).ok_or(Error::Empty("quadratic targets"))?;
        if d == 0 || targets.iter().any(|t| t.len() != d) {
            return Err(param("targets", "need equal nonzero dimensions"));
        }
        Ok(Objective::Quadratic { targets })
    }

    pub fn build(spec: &ObjectiveSpec, dim: usize, workers: usize, seed: u64) -> Result<Self> {
        if dim == 0 || workers == 0 {
            return Err(param("dim", "dimension and worker count must be >= 1"));
        }
        let mut r = substream(seed, &[TAG_OBJECTIVE]);
        match *spec {
            ObjectiveSpec::Quadratic { spread } => {
                let n = Normal::new(0.0, spread).map_err(|e| param("spread", e.to_string()))?;
                Objective::quadratic((0..workers).map(|_| (0..dim).map(|_| n.sample(&mut r)).collect()).collect())
            }
            ObjectiveSpec::Logistic { samples } => {
                if samples == 0 {
                    return Err(param("samples", "must be >= 1"));
                }
                let w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
                let shards = (0..workers)
                    .map(|_| {
                        let xs: Vec<Vec<f64>> = (0..samples)
                            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut r)).collect())
                            .collect();
                        let ys = xs
                            .iter()
                            .map(|x| if r.random::<f64>() < sigmoid(dot(x, &w) / (dim as f64).sqrt()) { 1.0 } else { 0.0 })
                            .collect();
                        (xs, ys)
                    })
                    .collect();
                Ok(Objective::Logistic { shards })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic { targets } => targets[0].len(),
            Objective::Logistic { shards } => shards[0].0[0].len(),
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Objective::Quadratic { targets } => targets.len(),
            Objective::Logistic { shards } => shards.len(),
        }
    }

    /// `F_n'(x)`.
    pub fn worker_gradient(&self, n: usize, x: &[f64]) -> Vec<f64> {
        match self {
            Objective::Quadratic { targets } => x.iter().zip(&targets[n]).map(|(a, b)| a - b).collect(),
            Objective::Logistic { shards } => {
                let (xs, ys) = &shards[n];
                let mut g = vec![0.0; x.len()];
                for (row, y) in xs.iter().zip(ys) {
                    let e = sigmoid(dot(row, x)) - y;
                    for (gi, v) in g.iter_mut().zip(row) {
                        *gi += e * v;
                    }
                }
                let m = xs.len() as f64;
                g.iter_mut().for_each(|v| *v /= m);
                g
            }
        }
    }

    /// `f(x) = (1/N) Σ_n F_n(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.workers() as f64;
        match self {
            Objective::Quadratic { targets } => {
                targets.iter().map(|b| 0.5 * x.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum::<f64>()
                    / n
            }
            Objective::Logistic { shards } => {
                shards
                    .iter()
                    .map(|(xs, ys)| {
                        xs.iter()
                            .zip(ys)
                            .map(|(row, y)| {
                                let z = dot(row, x);
                                z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
                            })
                            .sum::<f64>()
                            / xs.len() as f64
                    })
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Gradient Lipschitz constant: 1 for the quadratic, `¼·λ_max(XᵀX)/n`
    /// per shard (maximized over workers) for logistic.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Objective::Quadratic { .. } => 1.0,
            Objective::Logistic { shards } => shards
                .iter()
                .map(|(xs, _)| 0.25 * max_eigenvalue(xs) / xs.len() as f64)
                .fold(0.0, f64::max),
        }
    }

    /// A lower bound on `min f`: exact for the quadratic, `0` for logistic.
    pub fn min_value(&self) -> f64 {
        match self {
            Objective::Quadratic { targets } => {
                let d = self.dim();
                let n = targets.len() as f64;
                let mean: Vec<f64> = (0..d).map(|i| targets.iter().map(|b| b[i]).sum::<f64>() / n).collect();
                self.value(&mean)
            }
            Objective::Logistic { .. } => 0.0,
        }
    }
}

/// Largest eigenvalue of `XᵀX` by power iteration, padded by the final
/// residual norm.
fn max_eigenvalue(xs: &[Vec<f64>]) -> f64 {
    let d = xs[0].len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for row in xs {
            let s = dot(row, v);
            for (o, r) in out.iter_mut().zip(row) {
                *o += s * r;
            }
        }
        out
    };
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = apply(&v);
        let norm = l2_sq(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w);
        v = w.into_iter().map(|x| x / norm).collect();
    }
    let w = apply(&v);
    let rayleigh = dot(&v, &w);
    let resid = w.iter().zip(&v).map(|(a, b)| (a - rayleigh * b).powi(2)).sum::<f64>().sqrt();
    lambda.max(rayleigh) + resid
}

/// Constants supplied by hand; any `Some` overrides the measured value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeclaredConstants {
    pub l: Option<f64>,
    pub m: Option<f64>,
    pub sigma: Option<Vec<f64>>,
    pub sigma_tilde_sq: Option<f64>,
    pub tau_k: Option<f64>,
}

/// Inputs of a convergence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub objective: ObjectiveSpec,
    pub dim: usize,
    pub workers: usize,
    pub gamma: f64,
    /// Coordinate-wise clipping bound.
    pub c: f64,
    pub k: usize,
    /// Per-worker noise variance is `A·k`.
    pub a: f64,
    pub quantize: bool,
    pub steps: usize,
    /// Standard deviation of the Gaussian starting point.
    pub x0_scale: f64,
    pub seed: u64,
    /// Seeds averaged by [`verify_seeds`].
    pub seeds: usize,
    pub declared: DeclaredConstants,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveSpec::Quadratic { spread: 1.0 },
            dim: 50,
            workers: 8,
            gamma: 0.05,
            c: 1.0,
            k: 10,
            a: 0.01,
            quantize: true,
            steps: 200,
            x0_scale: 2.0,
            seed: 0,
            seeds: 20,
            declared: DeclaredConstants::default(),
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(param("gamma", "must be finite and > 0"));
        }
        if !(self.c > 0.0) {
            return Err(param("c", "must be > 0"));
        }
        if self.k == 0 || self.k > self.dim {
            return Err(param("k", format!("must satisfy 1 <= k <= d = {}", self.dim)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(param("a", "must be finite and >= 0"));
        }
        if self.workers == 0 {
            return Err(param("workers", "must be >= 1"));
        }
        if !(self.x0_scale >= 0.0) {
            return Err(param("x0_scale", "must be >= 0"));
        }
        Ok(())
    }
}

/// `Q(x) = sign(x)·Ber(min(|x|, 1))`, element-wise.
pub fn stochastic_sign<R: Rng + ?Sized>(v: &[f64], rng: &mut R) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let hit = rng.random::<f64>() < x.abs().min(1.0);
            if hit { x.signum() } else { 0.0 }
        })
        .collect()
}

/// `clip(top-k(g), c)` with coordinate-wise clipping; ties in `|g|` prefer
/// the lower index.
pub fn clipped_top_k(g: &[f64], k: usize, c: f64) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    for i in top_k_of(g, k).expect("validated k") {
        out[i] = g[i].clamp(-c, c);
    }
    out
}

/// One application of the update rule with worker streams
/// `substream(seed, [step, t, n])`.
pub fn update_rule_step(x: &[f64], objective: &Objective, cfg: &ConvergenceConfig, t: u64) -> Vec<f64> {
    let n = objective.workers();
    let mut sum = vec![0.0; x.len()];
    let noise = (cfg.a > 0.0).then(|| Normal::new(0.0, (cfg.a * cfg.k as f64).sqrt()).expect("finite variance"));
    for w in 0..n {
        let mut rng = substream(cfg.seed, &[TAG_STEP, t, w as u64]);
        let g = objective.worker_gradient(w, x);
        let mut v = clipped_top_k(&g, cfg.k, cfg.c);
        if cfg.quantize {
            v = stochastic_sign(&v, &mut rng);
        }
        for (s, vi) in sum.iter_mut().zip(&v) {
            *s += vi;
        }
        if let Some(noise) = &noise {
            for s in sum.iter_mut() {
                *s += noise.sample(&mut rng);
            }
        }
    }
    let scale = cfg.gamma / n as f64;
    x.iter().zip(&sum).map(|(xi, s)| xi - scale * s).collect()
}

/// `‖g − top-k(g)‖ / ‖g‖`, with `0` for the zero vector.
pub fn measure_tau_k(g: &[f64], k: usize) -> Result<f64> {
    let total = l2_sq(g);
    if total == 0.0 {
        return Ok(0.0);
    }
    let kept: f64 = top_k_of(g, k)?.into_iter().map(|i| g[i] * g[i]).sum();
    Ok(((total - kept).max(0.0) / total).sqrt())
}

/// `τ_j` for every `j = 0..=d`, from one sort.
pub fn tau_profile(g: &[f64]) -> Vec<f64> {
    let mut sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sq.iter().sum();
    let mut out = Vec::with_capacity(g.len() + 1);
    if total == 0.0 {
        out.resize(g.len() + 1, 0.0);
        return out;
    }
    // Residual tails summed from the small end so that τ_d is exactly 0.
    let mut tail = vec![0.0; g.len() + 1];
    for j in (0..g.len()).rev() {
        tail[j] = tail[j + 1] + sq[j];
    }
    out.extend(tail.iter().map(|t| (t / total).min(1.0).sqrt()));
    out
}

/// Trajectory-empirical constants of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub l: f64,
    /// `max_t sqrt((1/N) Σ_n ‖F_n'(x_t)‖²)`.
    pub m: f64,
    /// Per-coordinate `max_t sqrt((1/N) Σ_n (F_n'(x_t)_i − ∇f(x_t)_i)²)`.
    pub sigma: Vec<f64>,
    /// `max_{t,n} E‖Q(v) − v‖²` at `v = clip(top-k(F_n'(x_t)), c)`; 0 without quantization.
    pub sigma_tilde_sq: f64,
    /// `max_{t,n} τ_j(F_n'(x_t))` for `j = 0..=d`.
    pub tau_profile: Vec<f64>,
}

impl Constants {
    fn merge(&mut self, other: &Constants) {
        self.l = self.l.max(other.l);
        self.m = self.m.max(other.m);
        for (a, b) in self.sigma.iter_mut().zip(&other.sigma) {
            *a = a.max(*b);
        }
        self.sigma_tilde_sq = self.sigma_tilde_sq.max(other.sigma_tilde_sq);
        for (a, b) in self.tau_profile.iter_mut().zip(&other.tau_profile) {
            *a = a.max(*b);
        }
    }
}

/// Everything [`verify_bound`] needs from a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    /// `‖∇f(x_t)‖²` for `t = 0..T`.
    pub grad_sq: Vec<f64>,
    /// `‖∇f(x_t)‖₁` for `t = 0..T`.
    pub grad_l1: Vec<f64>,
    pub f0: f64,
    pub f_star: f64,
    pub f_final: f64,
    pub constants: Constants,
    pub x_final: Vec<f64>,
}

/// Executes `cfg.steps` updates from a Gaussian start.
pub fn run_trajectory(cfg: &ConvergenceConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let objective = Objective::build(&cfg.objective, cfg.dim, cfg.workers, cfg.seed)?;
    let mut r: Stream = substream(cfg.seed, &[TAG_X0]);
    let start = Normal::new(0.0, cfg.x0_scale).map_err(|e| param("x0_scale", e.to_string()))?;
    let x0: Vec<f64> = (0..cfg.dim).map(|_| start.sample(&mut r)).collect();
    run_from(&objective, x0, cfg)
}

/// Executes `cfg.steps` updates of `objective` from `x0`.
pub fn run_from(objective: &Objective, x0: Vec<f64>, cfg: &ConvergenceConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let d = objective.dim();
    if x0.len() != d || cfg.dim != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x0.len() });
    }
    let n = objective.workers();
    let mut constants = Constants {
        l: objective.lipschitz(),
        m: 0.0,
        sigma: vec![0.0; d],
        sigma_tilde_sq: 0.0,
        tau_profile: vec![0.0; d + 1],
    };
    let (mut grad_sq, mut grad_l1) = (Vec::with_capacity(cfg.steps), Vec::with_capacity(cfg.steps));
    let f0 = objective.value(&x0);
    let mut x = x0;
    for t in 0..cfg.steps {
        let grads: Vec<Vec<f64>> = (0..n).map(|w| objective.worker_gradient(w, &x)).collect();
        let mean: Vec<f64> = (0..d).map(|i| grads.iter().map(|g| g[i]).sum::<f64>() / n as f64).collect();
        grad_sq.push(l2_sq(&mean));
        grad_l1.push(mean.iter().map(|v| v.abs()).sum());
        let m2 = grads.iter().map(|g| l2_sq(g)).sum::<f64>() / n as f64;
        constants.m = constants.m.max(m2.sqrt());
        for i in 0..d {
            let var = grads.iter().map(|g| (g[i] - mean[i]).powi(2)).sum::<f64>() / n as f64;
            constants.sigma[i] = constants.sigma[i].max(var.sqrt());
        }
        for g in &grads {
            for (a, b) in constants.tau_profile.iter_mut().zip(tau_profile(g)) {
                *a = a.max(b);
            }
            if cfg.quantize {
                let v = clipped_top_k(g, cfg.k, cfg.c);
                let var: f64 = v.iter().map(|x| {
                    let p = x.abs().min(1.0);
                    p + x * x - 2.0 * x.abs() * p
                }).sum();
                constants.sigma_tilde_sq = constants.sigma_tilde_sq.max(var);
            }
        }
        x = update_rule_step(&x, objective, cfg, t as u64);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: t });
        }
    }
    Ok(RunTrace {
        seed: cfg.seed,
        grad_sq,
        grad_l1,
        f0,
        f_star: objective.min_value(),
        f_final: objective.value(&x),
        constants,
        x_final: x,
    })
}

/// The right-hand-side terms of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// `min{τ_k M², c(d−k)M}`.
    pub compression: f64,
    /// `LγAk`.
    pub noise: f64,
    /// `(f(x₀) − f(x*))/(Tγ)`.
    pub initial_gap: f64,
    /// `max{‖σ‖² + ‖σ‖M, 2‖σ‖₁}`.
    pub clipping: f64,
    /// `2Lγ(σ̃² + min{c², M²})`, or `Lγ·min{c², M²}` without quantization.
    pub quantization: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.compression + self.noise + self.initial_gap + self.clipping + self.quantization
    }
}

/// Constants as used by the bound: declared values where given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsedConstants {
    pub l: f64,
    pub m: f64,
    pub sigma_l2: f64,
    pub sigma_l1: f64,
    pub sigma_tilde_sq: f64,
    pub tau_k: f64,
    pub f0: f64,
    pub f_star: f64,
    pub source: String,
}

/// Result of [`verify_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub complete: bool,
    pub runs: usize,
    pub d: usize,
    pub k: usize,
    pub steps: usize,
    pub gamma: f64,
    pub c: f64,
    pub a: f64,
    pub quantize: bool,
    pub constants: Option<UsedConstants>,
    pub terms: Option<BoundTerms>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    /// `lhs ≤ rhs`; `None` when the report is incomplete.
    pub pass: Option<bool>,
}

fn terms_for(cfg: &ConvergenceConfig, k: usize, c: &UsedConstants, steps: usize) -> BoundTerms {
    let d = cfg.dim as f64;
    let kf = k as f64;
    let clip_m = (cfg.c * cfg.c).min(c.m * c.m);
    BoundTerms {
        compression: (c.tau_k * c.m * c.m).min(cfg.c * (d - kf) * c.m),
        noise: c.l * cfg.gamma * cfg.a * kf,
        initial_gap: (c.f0 - c.f_star) / (steps as f64 * cfg.gamma),
        clipping: (c.sigma_l2 * c.sigma_l2 + c.sigma_l2 * c.m).max(2.0 * c.sigma_l1),
        quantization: if cfg.quantize {
            2.0 * c.l * cfg.gamma * (c.sigma_tilde_sq + clip_m)
        } else {
            c.l * cfg.gamma * clip_m
        },
    }
}

fn used_constants(traces: &[RunTrace], k: usize, cfg: &ConvergenceConfig) -> Option<UsedConstants> {
    let first = traces.first()?;
    let mut merged = first.constants.clone();
    for t in &traces[1..] {
        merged.merge(&t.constants);
    }
    let declared = &cfg.declared;
    let sigma = declared.sigma.clone().unwrap_or(merged.sigma);
    if sigma.len() != cfg.dim || k >= merged.tau_profile.len() {
        return None;
    }
    let any_declared = declared.l.is_some()
        || declared.m.is_some()
        || declared.sigma.is_some()
        || declared.sigma_tilde_sq.is_some()
        || declared.tau_k.is_some();
    Some(UsedConstants {
        l: declared.l.unwrap_or(merged.l),
        m: declared.m.unwrap_or(merged.m),
        sigma_l2: l2_sq(&sigma).sqrt(),
        sigma_l1: sigma.iter().map(|s| s.abs()).sum(),
        sigma_tilde_sq: declared.sigma_tilde_sq.unwrap_or(merged.sigma_tilde_sq),
        tau_k: declared.tau_k.unwrap_or(merged.tau_profile[k]),
        f0: traces.iter().map(|t| t.f0).fold(f64::NEG_INFINITY, f64::max),
        f_star: traces.iter().map(|t| t.f_star).fold(f64::INFINITY, f64::min),
        source: if any_declared { "declared+trajectory-empirical" } else { "trajectory-empirical" }.into(),
    })
}

fn lhs_for(traces: &[RunTrace], cfg: &ConvergenceConfig) -> Option<f64> {
    let steps = traces.first()?.grad_sq.len();
    if steps == 0 || traces.iter().any(|t| t.grad_sq.len() != steps) {
        return None;
    }
    let r = traces.len() as f64;
    let mean_min: f64 = (0..steps)
        .map(|t| {
            let sq = traces.iter().map(|tr| tr.grad_sq[t]).sum::<f64>() / r;
            let l1 = traces.iter().map(|tr| tr.grad_l1[t]).sum::<f64>() / r;
            sq.min(l1)
        })
        .sum::<f64>()
        / steps as f64;
    Some(cfg.c.min(1.0) / (cfg.dim as f64 + 2.0) * mean_min)
}

fn report(traces: &[RunTrace], cfg: &ConvergenceConfig, k: usize) -> BoundReport {
    let constants = used_constants(traces, k, cfg);
    let lhs = lhs_for(traces, cfg);
    let steps = traces.first().map_or(0, |t| t.grad_sq.len());
    let terms = constants.as_ref().filter(|_| steps > 0).map(|c| terms_for(cfg, k, c, steps));
    let rhs = terms.map(|t| t.total());
    let complete = lhs.is_some() && rhs.is_some();
    BoundReport {
        complete,
        runs: traces.len(),
        d: cfg.dim,
        k,
        steps,
        gamma: cfg.gamma,
        c: cfg.c,
        a: cfg.a,
        quantize: cfg.quantize,
        constants,
        terms,
        lhs,
        rhs,
        pass: match (lhs, rhs) {
            (Some(l), Some(r)) => Some(l <= r),
            _ => None,
        },
    }
}

/// Evaluates both sides of the bound for one or more runs of `cfg`.
/// Expectations on the left are seed averages; constants on the right are
/// maxima over all runs.
pub fn verify_bound(traces: &[RunTrace], cfg: &ConvergenceConfig) -> BoundReport {
    report(traces, cfg, cfg.k)
}

/// Runs seeds `cfg.seed .. cfg.seed + cfg.seeds` in parallel.
pub fn run_seeds(cfg: &ConvergenceConfig) -> Result<Vec<RunTrace>> {
    (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|s| run_trajectory(&ConvergenceConfig { seed: cfg.seed.wrapping_add(s), ..cfg.clone() }))
        .collect()
}

/// Seed-averaged report plus one report per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub averaged: BoundReport,
    pub per_seed: Vec<BoundReport>,
}

pub fn verify_seeds(cfg: &ConvergenceConfig) -> Result<SeedReport> {
    let traces = run_seeds(cfg)?;
    Ok(SeedReport {
        averaged: verify_bound(&traces, cfg),
        per_seed: traces.iter().map(|t| verify_bound(std::slice::from_ref(t), cfg)).collect(),
    })
}

/// One row of [`k_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub tau_k: f64,
    pub terms: BoundTerms,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Bound terms across `ks` at fixed `γ`, with constants pooled over the
/// trajectories of every `k` so that rows compare like with like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepReport {
    pub constants: Constants,
    pub rows: Vec<KSweepRow>,
}

pub fn k_sweep(cfg: &ConvergenceConfig, ks: &[usize]) -> Result<KSweepReport> {
    if ks.is_empty() {
        return Err(Error::Empty("k grid"));
    }
    let runs: Vec<Vec<RunTrace>> = ks
        .iter()
        .map(|&k| run_seeds(&ConvergenceConfig { k, ..cfg.clone() }))
        .collect::<Result<_>>()?;
    let all: Vec<RunTrace> = runs.iter().flatten().cloned().collect();
    let mut pooled = all[0].constants.clone();
    for t in &all[1..] {
        pooled.merge(&t.constants);
    }
    let rows = ks
        .iter()
        .zip(&runs)
        .map(|(&k, traces)| {
            let kcfg = ConvergenceConfig { k, ..cfg.clone() };
            let c = used_constants(&all, k, &kcfg).ok_or(Error::Empty("trajectory"))?;
            let terms = terms_for(&kcfg, k, &c, cfg.steps);
            let lhs = lhs_for(traces, &kcfg).ok_or(Error::Empty("trajectory"))?;
            let rhs = terms.total();
            Ok(KSweepRow { k, tau_k: c.tau_k, terms, lhs, rhs, pass: lhs <= rhs })
        })
        .collect::<Result<_>>()?;
    Ok(KSweepReport { constants: pooled, rows })
}

/// Mean measured `τ_k` under Weibull magnitudes next to the proportionality
/// profile `exp(−(k/(ρ₁d))^{ρ₂}) − exp(−1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub k: usize,
    pub mean_tau: f64,
    pub reference: f64,
}

pub fn weibull_tau_profile(rho1: f64, rho2: f64, d: usize, trials: usize, seed: u64, ks: &[usize]) -> Result<Vec<TauPoint>> {
    if !(rho1 > 0.0) {
        return Err(param("rho1", "must be > 0"));
    }
    if !(rho2 > 0.0 && rho2 < 1.0) {
        return Err(param("rho2", "must lie in (0, 1)"));
    }
    if d == 0 || trials == 0 {
        return Err(param("d", "dimension and trials must be >= 1"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k > d) {
        return Err(param("k", format!("{k} exceeds d = {d}")));
    }
    let dist = Weibull::new(rho1, rho2).map_err(|e| param("weibull", e.to_string()))?;
    let sums = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut r = substream(seed, &[t]);
            let g: Vec<f64> = (0..d).map(|_| dist.sample(&mut r)).collect();
            let p = tau_profile(&g);
            ks.iter().map(|&k| p[k]).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| TauPoint {
            k,
            mean_tau: sums.iter().map(|s| s[j]).sum::<f64>() / trials as f64,
            reference: (-(k as f64 / (rho1 * d as f64)).powf(rho2)).exp() - (-1.0f64).exp(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    fn gd_config(d: usize, gamma: f64) -> ConvergenceConfig {
        ConvergenceConfig {
            dim: d,
            workers: 1,
            gamma,
            c: 1e9,
            k: d,
            a: 0.0,
            quantize: false,
            steps: 50,
            ..ConvergenceConfig::default()
        }
    }

    #[test]
    fn exact_gd_reduction() {
        let obj = Objective::quadratic(vec![vec![0.0; 4]]).unwrap();
        let cfg = gd_config(4, 0.05);
        let mut x = vec![1.0, -2.0, 0.5, 3.0];
        let mut expect = x.clone();
        for t in 0..cfg.steps as u64 {
            x = update_rule_step(&x, &obj, &cfg, t);
            expect.iter_mut().for_each(|v| *v *= 0.95);
            for (a, b) in x.iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let trace = run_from(&obj, vec![1.0, -2.0, 0.5, 3.0], &cfg).unwrap();
        let rep = verify_bound(&[trace], &cfg);
        let terms = rep.terms.unwrap();
        assert_eq!(rep.pass, Some(true));
        assert_eq!((terms.compression, terms.noise, terms.clipping), (0.0, 0.0, 0.0));
        assert!(terms.initial_gap > terms.quantization);
    }

    #[test]
    fn noise_variance_of_step() {
        let obj = Objective::quadratic(vec![vec![0.5, -0.5]; 3]).unwrap();
        let cfg = ConvergenceConfig { dim: 2, workers: 3, k: 2, a: 0.2, gamma: 0.3, quantize: false, ..ConvergenceConfig::default() };
        let x = [1.0, 1.0];
        let n = 100_000;
        let mut s = [0.0; 2];
        let mut s2 = [0.0; 2];
        for t in 0..n {
            let y = update_rule_step(&x, &obj, &cfg, t);
            for i in 0..2 {
                s[i] += y[i];
                s2[i] += y[i] * y[i];
            }
        }
        let want = 0.3f64.powi(2) * 0.2 * 2.0 / 3.0;
        for i in 0..2 {
            let m = s[i] / n as f64;
            let var = s2[i] / n as f64 - m * m;
            let se = want * (2.0 / n as f64).sqrt();
            assert!((var - want).abs() <= 4.0 * se, "{var} vs {want}");
        }
    }

    #[test]
    fn quantized_step_is_unbiased() {
        let obj = Objective::quadratic(vec![vec![0.1, -0.4, 0.7]]).unwrap();
        let q = ConvergenceConfig { dim: 3, workers: 1, k: 3, c: 1.0, a: 0.0, quantize: true, gamma: 1.0, ..ConvergenceConfig::default() };
        let plain = ConvergenceConfig { quantize: false, ..q.clone() };
        let x = [0.0; 3];
        let want = update_rule_step(&x, &obj, &plain, 0);
        let n = 100_000;
        let mut s = [0.0; 3];
        for t in 0..n {
            for (a, b) in s.iter_mut().zip(update_rule_step(&x, &obj, &q, t)) {
                *a += b;
            }
        }
        for i in 0..3 {
            let p = want[i].abs();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((s[i] / n as f64 - want[i]).abs() <= 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn stochastic_sign_mean() {
        let v = [0.3, -0.8, 0.0, 1.0];
        let mut r = stream(1);
        let n = 100_000;
        let mut s = [0.0; 4];
        for _ in 0..n {
            for (a, b) in s.iter_mut().zip(stochastic_sign(&v, &mut r)) {
                *a += b;
            }
        }
        for i in 0..4 {
            let p = v[i].abs();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((s[i] / n as f64 - v[i]).abs() <= 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn tau_examples() {
        assert!((measure_tau_k(&[3.0, 4.0], 1).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(measure_tau_k(&[3.0, 4.0], 2).unwrap(), 0.0);
        assert_eq!(measure_tau_k(&[0.0, 0.0], 1).unwrap(), 0.0);
        assert!(measure_tau_k(&[1.0], 2).is_err());
        let p = tau_profile(&[3.0, 4.0]);
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 0.6).abs() < 1e-15);
        assert_eq!(p[2], 0.0);
    }

    proptest! {
        #[test]
        fn tau_is_bounded_and_nonincreasing(g in prop::collection::vec(-10.0f64..10.0, 1..30)) {
            let p = tau_profile(&g);
            prop_assert_eq!(p[g.len()], 0.0);
            for k in 1..=g.len() {
                let t = measure_tau_k(&g, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&t));
                prop_assert!((t - p[k]).abs() <= 1e-7);
                prop_assert!(p[k] <= p[k - 1]);
            }
        }
    }

    #[test]
    fn default_config_passes_every_seed() {
        let rep = verify_seeds(&ConvergenceConfig::default()).unwrap();
        assert_eq!(rep.averaged.pass, Some(true));
        assert!(rep.per_seed.iter().all(|r| r.pass == Some(true)));
        let c = rep.averaged.constants.unwrap();
        assert!(c.sigma_tilde_sq <= 50.0);
    }

    #[test]
    fn logistic_objective_runs_and_passes() {
        let cfg = ConvergenceConfig {
            objective: ObjectiveSpec::Logistic { samples: 40 },
            dim: 10,
            k: 3,
            steps: 50,
            seeds: 3,
            ..ConvergenceConfig::default()
        };
        let rep = verify_seeds(&cfg).unwrap();
        assert_eq!(rep.averaged.pass, Some(true));
        let l = rep.averaged.constants.unwrap().l;
        assert!(l > 0.0 && l.is_finite());
    }

    #[test]
    fn lipschitz_bound_covers_hessian() {
        let Objective::Logistic { shards } = Objective::build(&ObjectiveSpec::Logistic { samples: 30 }, 4, 1, 5).unwrap()
        else {
            unreachable!()
        };
        let xs = &shards[0].0;
        let lam = max_eigenvalue(xs);
        let mut r = stream(3);
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            let quad: f64 = xs.iter().map(|row| dot(row, &v).powi(2)).sum();
            assert!(quad <= lam * l2_sq(&v) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn missing_trajectory_is_incomplete() {
        let cfg = ConvergenceConfig { steps: 0, ..ConvergenceConfig::default() };
        let t = run_trajectory(&cfg).unwrap();
        let rep = verify_bound(&[t], &cfg);
        assert!(!rep.complete);
        assert_eq!(rep.pass, None);
        assert!(!verify_bound(&[], &cfg).complete);
    }

    #[test]
    fn k_sweep_tradeoff() {
        let cfg = ConvergenceConfig { seeds: 4, ..ConvergenceConfig::default() };
        let ks = [50, 40, 30, 20, 10, 5];
        let rep = k_sweep(&cfg, &ks).unwrap();
        for w in rep.rows.windows(2) {
            assert!(w[1].terms.noise < w[0].terms.noise);
            assert!(w[1].terms.compression >= w[0].terms.compression);
        }
        assert!(rep.rows.iter().all(|r| r.pass));
    }

    #[test]
    fn weibull_profile_shape() {
        let ks: Vec<usize> = (0..=10).map(|i| i * 100).collect();
        let heavy = weibull_tau_profile(1.0, 0.5, 1000, 100, 1, &ks).unwrap();
        for w in heavy.windows(2) {
            assert!(w[1].mean_tau < w[0].mean_tau);
            assert!(w[1].reference < w[0].reference);
        }
        assert_eq!(heavy.last().unwrap().mean_tau, 0.0);
        let a = weibull_tau_profile(1.0, 0.3, 1000, 100, 2, &[100, 300]).unwrap();
        let b = weibull_tau_profile(1.0, 0.9, 1000, 100, 2, &[100, 300]).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.mean_tau < y.mean_tau));
        assert!(weibull_tau_profile(1.0, 1.5, 10, 1, 0, &[1]).is_err());
    }
}
