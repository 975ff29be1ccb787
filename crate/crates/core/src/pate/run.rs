//! End-to-end teacher/student training loop.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{
    likely_outcome, outcome_probability, LedgerRecord, Mechanism, MuSearch, OrderGrid,
    PrivacyLedger, Track,
};
use crate::aggregate::{dp_topk_agg, AggregationParams};
use crate::error::{Error, Result};
use crate::grad::DenseGradient;
use crate::rng::{substream, Stream};

use super::data::{partition_dataset, Dataset, DatasetSpec, PartitionHandle};
use super::probe::{ProbeConfig, SoftmaxProbe};
use super::student::{generator_fit, student_update, Generator};
use super::teacher::{teacher_gradient, teacher_step, Sample, TeacherModel};

const TAG_TRAIN: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_PARTITION: u64 = 3;
const TAG_TEACHER_INIT: u64 = 4;
const TAG_TEACHER_STEP: u64 = 5;
const TAG_STUDENT: u64 = 6;
const TAG_LATENT: u64 = 7;
const TAG_AGG: u64 = 8;

/// How synthetic records are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentMode {
    /// Records are optimized directly.
    #[default]
    Record,
    /// Records are generator outputs `Ψ(z)`, refit after every iteration.
    Generator,
}

/// When teachers take a discriminator step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSchedule {
    /// Before every aggregation, once per synthetic record.
    #[default]
    PerRecord,
    /// Once per iteration.
    PerBatch,
}

/// Generator settings for [`StudentMode::Generator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    /// 0 gives a linear generator.
    pub hidden: usize,
    pub lr: f64,
    pub steps: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { latent_dim: 4, hidden: 0, lr: 0.05, steps: 20 }
    }
}

/// Inputs of [`run_pate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PateConfig {
    pub teachers: usize,
    /// Synthetic records per iteration (also the teachers' real batch size).
    pub records: usize,
    pub iterations: usize,
    pub k: usize,
    pub sigma: f64,
    pub beta: f64,
    pub clip_c: f64,
    pub epsilon_target: f64,
    pub delta: f64,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub train_size: usize,
    pub test_size: usize,
    pub mode: StudentMode,
    pub teacher_hidden: usize,
    pub teacher_lr: f64,
    /// Discriminator steps taken before the first aggregation.
    pub teacher_warmup: usize,
    pub teacher_schedule: TeacherSchedule,
    /// Student learning rate γ.
    pub student_lr: f64,
    pub generator: GeneratorConfig,
    pub probe: ProbeConfig,
    /// Run the data-dependent analysis for every aggregation.
    pub data_dependent: bool,
    pub mu_points: usize,
    pub mu_refine: usize,
}

impl Default for PateConfig {
    fn default() -> Self {
        Self {
            teachers: 100,
            records: 20,
            iterations: 100,
            k: 1,
            sigma: 50.0,
            beta: 0.3,
            clip_c: 1e-5,
            epsilon_target: 1.0,
            delta: 1e-5,
            seed: 0,
            dataset: DatasetSpec::TwoClusters,
            train_size: 2000,
            test_size: 500,
            mode: StudentMode::Record,
            teacher_hidden: 16,
            teacher_lr: 0.1,
            teacher_warmup: 20,
            teacher_schedule: TeacherSchedule::PerRecord,
            student_lr: 0.1,
            generator: GeneratorConfig::default(),
            probe: ProbeConfig::default(),
            data_dependent: true,
            mu_points: 200,
            mu_refine: 6,
        }
    }
}

impl PateConfig {
    pub fn aggregation(&self) -> AggregationParams {
        AggregationParams { teachers: self.teachers, sigma: self.sigma, beta: self.beta, k: self.k, c: self.clip_c }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.aggregation().validate()?;
        self.dataset.validate()?;
        if self.train_size == 0 || self.train_size % self.teachers != 0 {
            return bad(format!("{} teachers do not evenly divide {} records", self.teachers, self.train_size));
        }
        if self.k > self.dataset.dim() {
            return bad(format!("k = {} exceeds dimension {}", self.k, self.dataset.dim()));
        }
        if self.records == 0 || self.test_size == 0 {
            return bad("records and test_size must be positive".into());
        }
        if !(self.student_lr > 0.0) || !(self.teacher_lr >= 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.epsilon_target > 0.0) {
            return bad("epsilon_target must be > 0".into());
        }
        if self.mode == StudentMode::Generator && self.generator.latent_dim == 0 {
            return bad("generator latent_dim must be positive".into());
        }
        if self.data_dependent && self.mu_points < 2 {
            return bad("mu_points must be >= 2".into());
        }
        Ok(())
    }
}

/// State after one training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    /// Cumulative aggregation count.
    pub invocations: u64,
    pub epsilon_indep: f64,
    pub epsilon_dep_uncapped: f64,
    /// Largest `q̃` among this iteration's aggregations.
    pub q_tilde: Option<f64>,
    pub probe_accuracy: f64,
}

/// Result of [`run_pate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rounds: Vec<RoundRecord>,
    pub invocations: u64,
    pub epsilon_indep: f64,
    pub epsilon_dep_uncapped: f64,
    pub halted_on_budget: bool,
    /// Refused out-of-partition lookups summed over all teachers.
    pub foreign_accesses: u64,
    pub synthetic: Vec<Vec<f64>>,
    pub synthetic_labels: Vec<usize>,
    pub ledger: Vec<LedgerRecord>,
    pub diagnostic: Option<String>,
}

impl RunReport {
    pub fn is_empty(&self) -> bool {
        self.invocations == 0
    }
}

struct Teachers {
    models: Vec<TeacherModel>,
    partitions: Vec<PartitionHandle>,
    steps: u64,
}

impl Teachers {
    fn step(&mut self, data: &Dataset, fakes: &[Vec<f64>], labels: &[usize], cfg: &PateConfig) {
        let fake: Vec<Sample<'_>> = fakes.iter().map(|x| x.as_slice()).zip(labels.iter().copied()).collect();
        let step = self.steps;
        self.steps += 1;
        self.models.par_iter_mut().zip(self.partitions.par_iter()).for_each(|(t, part)| {
            let mut r = substream(cfg.seed, &[TAG_TEACHER_STEP, step, part.id() as u64]);
            let real: Vec<Sample<'_>> = part
                .sample(cfg.records, &mut r)
                .into_iter()
                .filter_map(|i| part.fetch(data, i))
                .collect();
            *t = teacher_step(t, &real, &fake, cfg.teacher_lr);
        });
    }

    /// Descent directions `∂ log Γ_i / ∂a` at the record.
    fn directions(&self, x: &[f64], label: usize) -> Vec<DenseGradient> {
        self.models
            .par_iter()
            .map(|t| {
                let g = teacher_gradient(t, x, label);
                DenseGradient::new(g.values().iter().map(|v| -v).collect()).expect("finite")
            })
            .collect()
    }

    fn foreign_accesses(&self) -> u64 {
        self.partitions.iter().map(|p| p.foreign_accesses()).sum()
    }
}

enum Student {
    Records(Vec<Vec<f64>>),
    Generator { psi: Generator, z: Vec<Vec<f64>> },
}

impl Student {
    fn outputs(&self, labels: &[usize]) -> Vec<Vec<f64>> {
        match self {
            Student::Records(x) => x.clone(),
            Student::Generator { psi, z } => z.iter().zip(labels).map(|(zj, &y)| psi.generate(zj, y)).collect(),
        }
    }
}

fn latent_batch(cfg: &PateConfig, iteration: u64) -> Vec<Vec<f64>> {
    (0..cfg.records)
        .map(|j| {
            let mut r = substream(cfg.seed, &[TAG_LATENT, iteration, j as u64]);
            (0..cfg.generator.latent_dim).map(|_| StandardNormal.sample(&mut r)).collect()
        })
        .collect()
}

fn probe_accuracy(records: &[Vec<f64>], labels: &[usize], test: &Dataset, probe: &ProbeConfig) -> f64 {
    SoftmaxProbe::train(records, labels, test.classes(), probe).accuracy(test)
}

/// Trains synthetic records against an ensemble of private teachers until
/// `iterations` are done or the next aggregation would exceed the budget.
pub fn run_pate(cfg: &PateConfig) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.dataset;
    let classes = spec.classes();
    let data = spec.generate(cfg.train_size, &mut substream(cfg.seed, &[TAG_TRAIN]))?;
    let test = spec.generate(cfg.test_size, &mut substream(cfg.seed, &[TAG_TEST]))?;
    let partitions = partition_dataset(data.len(), cfg.teachers, &mut substream(cfg.seed, &[TAG_PARTITION]))?;
    let models = (0..cfg.teachers)
        .map(|i| {
            let mut r = substream(cfg.seed, &[TAG_TEACHER_INIT, i as u64]);
            TeacherModel::new(spec.dim(), classes, cfg.teacher_hidden, i, &mut r)
        })
        .collect();
    let mut teachers = Teachers { models, partitions, steps: 0 };

    let labels: Vec<usize> = (0..cfg.records).map(|j| j % classes).collect();
    let mut student = match cfg.mode {
        StudentMode::Record => Student::Records(
            (0..cfg.records)
                .map(|j| spec.prior_sample(&mut substream(cfg.seed, &[TAG_STUDENT, j as u64])))
                .collect(),
        ),
        StudentMode::Generator => {
            let g = cfg.generator;
            let mut r: Stream = substream(cfg.seed, &[TAG_STUDENT]);
            Student::Generator {
                psi: Generator::new(g.latent_dim, classes, g.hidden, spec.dim(), &mut r),
                z: latent_batch(cfg, 0),
            }
        }
    };

    let mut ledger = PrivacyLedger::new(OrderGrid::standard(), cfg.delta)?.with_mu_search(MuSearch {
        points: cfg.mu_points,
        refine_rounds: cfg.mu_refine,
        ..MuSearch::default()
    });
    let mechanism = Mechanism::vote_sum(cfg.k, cfg.sigma);
    let params = cfg.aggregation();

    let warm = student.outputs(&labels);
    for _ in 0..cfg.teacher_warmup {
        teachers.step(&data, &warm, &labels, cfg);
    }

    let mut rounds = Vec::new();
    let mut halted = false;
    'outer: for iteration in 0..cfg.iterations as u64 {
        if let Student::Generator { z, .. } = &mut student {
            *z = latent_batch(cfg, iteration);
        }
        let mut current = student.outputs(&labels);
        let mut q_max: Option<f64> = None;
        let before = ledger.rounds();
        if cfg.teacher_schedule == TeacherSchedule::PerBatch
            && ledger.epsilon_with(&mechanism)? <= cfg.epsilon_target
        {
            teachers.step(&data, &current, &labels, cfg);
        }
        for j in 0..cfg.records {
            if ledger.epsilon_with(&mechanism)? > cfg.epsilon_target {
                halted = true;
                break;
            }
            if cfg.teacher_schedule == TeacherSchedule::PerRecord {
                teachers.step(&data, &current, &labels, cfg);
            }
            let directions = teachers.directions(&current[j], labels[j]);
            let mut r = substream(cfg.seed, &[TAG_AGG, ledger.rounds()]);
            let (g_bar, votes) = dp_topk_agg(&directions, &params, &mut r)?;
            if cfg.data_dependent {
                let sums = votes.sums_f64();
                let likely = likely_outcome(&sums, cfg.teachers, cfg.beta, cfg.sigma);
                let q = outcome_probability(&sums, cfg.teachers, cfg.beta, cfg.sigma, &likely)?;
                ledger.compose_data_dependent(cfg.k, cfg.sigma, q)?;
                q_max = Some(q_max.map_or(q, |m: f64| m.max(q)));
            } else {
                ledger.compose(mechanism.clone())?;
            }
            current[j] = student_update(&current[j], &g_bar, cfg.student_lr);
        }
        let ran = ledger.rounds() > before;
        match &mut student {
            Student::Records(x) => *x = current,
            Student::Generator { psi, z } => {
                if ran {
                    let g = cfg.generator;
                    *psi = generator_fit(psi, z, &labels, &current, g.lr, g.steps);
                }
            }
        }
        if ran {
            let synthetic = student.outputs(&labels);
            rounds.push(RoundRecord {
                round: iteration + 1,
                invocations: ledger.rounds(),
                epsilon_indep: ledger.epsilon(Track::Independent).0,
                epsilon_dep_uncapped: ledger.epsilon(Track::DependentUncapped).0,
                q_tilde: q_max,
                probe_accuracy: probe_accuracy(&synthetic, &labels, &test, &cfg.probe),
            });
        }
        if halted {
            break 'outer;
        }
    }

    let invocations = ledger.rounds();
    let (epsilon_indep, epsilon_dep_uncapped) = if invocations == 0 {
        (0.0, 0.0)
    } else {
        (ledger.epsilon(Track::Independent).0, ledger.epsilon(Track::DependentUncapped).0)
    };
    assert!(epsilon_indep <= cfg.epsilon_target, "privacy budget exceeded");
    let diagnostic = (invocations == 0 && halted).then(|| {
        format!(
            "epsilon_target {} is below the cost of a single aggregation ({:.6})",
            cfg.epsilon_target,
            ledger.epsilon_with(&mechanism).unwrap_or(f64::NAN)
        )
    });
    Ok(RunReport {
        rounds,
        invocations,
        epsilon_indep,
        epsilon_dep_uncapped,
        halted_on_budget: halted,
        foreign_accesses: teachers.foreign_accesses(),
        synthetic: student.outputs(&labels),
        synthetic_labels: labels,
        ledger: ledger.records().to_vec(),
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PateConfig {
        PateConfig { teachers: 20, train_size: 400, records: 6, iterations: 3, test_size: 100, ..PateConfig::default() }
    }

    #[test]
    fn budget_below_one_round_runs_nothing() {
        let cfg = PateConfig { epsilon_target: 1e-3, ..small() };
        let report = run_pate(&cfg).unwrap();
        assert!(report.is_empty());
        assert!(report.rounds.is_empty());
        assert!(report.diagnostic.is_some());
    }

    #[test]
    fn small_run_respects_isolation_and_budget() {
        let report = run_pate(&small()).unwrap();
        assert_eq!(report.invocations, 18);
        assert_eq!(report.rounds.len(), 3);
        assert_eq!(report.foreign_accesses, 0);
        assert!(report.epsilon_indep <= 1.0);
        assert!(report.rounds.iter().all(|r| r.q_tilde.is_some()));
    }

    #[test]
    fn generator_mode_and_batch_schedule_run() {
        let cfg = PateConfig {
            mode: StudentMode::Generator,
            teacher_schedule: TeacherSchedule::PerBatch,
            data_dependent: false,
            ..small()
        };
        let report = run_pate(&cfg).unwrap();
        assert_eq!(report.invocations, 18);
        assert!(report.rounds.iter().all(|r| r.q_tilde.is_none()));
        assert_eq!(report.synthetic.len(), 6);
    }

    #[test]
    fn indivisible_partition_rejected() {
        let cfg = PateConfig { train_size: 401, ..small() };
        assert!(matches!(run_pate(&cfg), Err(Error::Config(_))));
    }
}
