//! `dpvote`: experiment runner for the accountant and the simulation harnesses.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 infeasible privacy
//! budget, 4 internal assertion failure.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dpvote::accountant::{budget_schedule, OrderGrid, PrivacyLedger, Track};
use dpvote::compress::{compress_bench, BenchConfig};
use dpvote::convergence::{k_sweep, verify_seeds, weibull_tau_profile, ConvergenceConfig};
use dpvote::dpsgd::{run_control_experiment, Scenario, SgdConfig, TaskSpec};
use dpvote::output::{load_config, Header, OutputDir};
use dpvote::pate::{run_pate, PateConfig};
use dpvote::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "dpvote", version, about = "Private top-k sign-vote aggregation: accountant and harnesses")]
struct Cli {
    /// Worker threads for harness-internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for result files.
    #[arg(long, global = true, env = "DPVOTE_OUT_DIR", default_value = "dpvote-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ε per round for repeated vote aggregation, or the number of rounds a budget allows.
    Accountant(AccountantArgs),
    /// Teacher-ensemble training of synthetic records.
    Pate(HarnessArgs),
    /// DP-SGD control experiment over compression and noise scenarios.
    Dpsgd(HarnessArgs),
    /// Convergence bound verification, k-sweep and Weibull τ profile.
    Convergence(HarnessArgs),
    /// Direction fidelity and payload of every compressor.
    CompressBench(HarnessArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Standard,
    Integer,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["rounds", "epsilon_target"]))]
struct AccountantArgs {
    /// Votes per teacher.
    #[arg(long)]
    k: usize,
    /// Noise standard deviation on the vote sums.
    #[arg(long)]
    sigma: f64,
    /// Failure probability δ of the reported (ε, δ) guarantee
    #[arg(long)]
    delta: f64,
    /// Report ε after each of this many rounds.
    #[arg(long)]
    rounds: Option<u64>,
    /// Report the largest round count with ε within this target.
    #[arg(long)]
    epsilon_target: Option<f64>,
    /// Outcome probability used for the data-dependent track (1 disables the gain).
    #[arg(long, default_value_t = 1.0)]
    q_tilde: f64,
    #[arg(long, value_enum, default_value_t = Grid::Standard)]
    grid: Grid,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct HarnessArgs {
    /// TOML config (JSON when the extension is `.json`); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetInfeasible(_) | Error::InfiniteBudget => EXIT_BUDGET,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

type CmdResult = Result<(), Failure>;

fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Error> {
    path.map_or_else(|| Ok(T::default()), load_config)
}

fn grid(g: Grid) -> OrderGrid {
    match g {
        Grid::Standard => OrderGrid::standard(),
        Grid::Integer => OrderGrid::integer(),
    }
}

#[derive(Serialize)]
struct EpsilonRow {
    round: u64,
    epsilon_independent: f64,
    epsilon_dependent: f64,
    epsilon_dependent_uncapped: f64,
}

fn cmd_accountant(a: &AccountantArgs) -> CmdResult {
    let grid = grid(a.grid);
    if let Some(target) = a.epsilon_target {
        let rounds = budget_schedule(a.k, a.sigma, a.delta, target, &grid)?;
        match a.format {
            Format::Text => println!("{rounds}"),
            Format::Json => println!("{}", serde_json::json!({ "epsilon_target": target, "rounds": rounds })),
        }
        return Ok(());
    }
    let rounds = a.rounds.unwrap_or(0);
    let mut ledger = PrivacyLedger::new(grid, a.delta)?;
    let mut rows = Vec::with_capacity(rounds as usize);
    for round in 1..=rounds {
        ledger.compose_data_dependent(a.k, a.sigma, a.q_tilde)?;
        rows.push(EpsilonRow {
            round,
            epsilon_independent: ledger.epsilon(Track::Independent).0,
            epsilon_dependent: ledger.epsilon(Track::Dependent).0,
            epsilon_dependent_uncapped: ledger.epsilon(Track::DependentUncapped).0,
        });
    }
    match a.format {
        Format::Text => {
            println!("round\tepsilon_independent\tepsilon_dependent\tepsilon_dependent_uncapped");
            for r in &rows {
                println!(
                    "{}\t{:.6}\t{:.6}\t{:.6}",
                    r.round, r.epsilon_independent, r.epsilon_dependent, r.epsilon_dependent_uncapped
                );
            }
        }
        Format::Json => println!("{}", serde_json::to_string(&rows).map_err(|e| fail(EXIT_INTERNAL, e.to_string()))?),
    }
    Ok(())
}

#[derive(Serialize)]
struct PateSummary {
    seed: u64,
    invocations: u64,
    epsilon_indep: f64,
    epsilon_dep_uncapped: f64,
    epsilon_target: f64,
    halted_on_budget: bool,
    foreign_accesses: u64,
    final_probe_accuracy: f64,
}

fn cmd_pate(h: &HarnessArgs, out: &Path) -> CmdResult {
    let mut cfg: PateConfig = load_or_default(h.config.as_deref())?;
    if let Some(s) = h.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let report = run_pate(&cfg)?;
    if let Some(d) = &report.diagnostic {
        return Err(fail(EXIT_BUDGET, d.clone()));
    }
    if report.foreign_accesses != 0 {
        return Err(fail(EXIT_INTERNAL, format!("{} out-of-partition accesses", report.foreign_accesses)));
    }
    let dir = OutputDir::new(out, Header::new("pate", &cfg, cfg.seed)?)?;
    dir.write_jsonl("pate_rounds.jsonl", &report.rounds)?;
    dir.write_jsonl("pate_ledger.jsonl", &report.ledger)?;
    let summary = PateSummary {
        seed: cfg.seed,
        invocations: report.invocations,
        epsilon_indep: report.epsilon_indep,
        epsilon_dep_uncapped: report.epsilon_dep_uncapped,
        epsilon_target: cfg.epsilon_target,
        halted_on_budget: report.halted_on_budget,
        foreign_accesses: report.foreign_accesses,
        final_probe_accuracy: report.rounds.last().map_or(0.0, |r| r.probe_accuracy),
    };
    dir.write_csv("pate_summary.csv", &[summary])?;
    let synthetic: Vec<serde_json::Value> = report
        .synthetic
        .iter()
        .zip(&report.synthetic_labels)
        .map(|(x, &y)| serde_json::json!({ "label": y, "record": x }))
        .collect();
    dir.write_jsonl("pate_synthetic.jsonl", &synthetic)?;
    Ok(())
}

/// `dpsgd` config: task, shared SGD settings, scenarios and seed count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DpsgdExperiment {
    seeds: u64,
    scenarios: Vec<Scenario>,
    task: TaskSpec,
    sgd: SgdConfig,
}

impl Default for DpsgdExperiment {
    fn default() -> Self {
        Self { seeds: 10, scenarios: Scenario::ALL.to_vec(), task: TaskSpec::default(), sgd: SgdConfig::default() }
    }
}

fn cmd_dpsgd(h: &HarnessArgs, out: &Path) -> CmdResult {
    let mut cfg: DpsgdExperiment = load_or_default(h.config.as_deref())?;
    if let Some(s) = h.seed {
        cfg.sgd.seed = s;
    }
    let seeds: Vec<u64> = (0..cfg.seeds).map(|i| cfg.sgd.seed.wrapping_add(i)).collect();
    let table = run_control_experiment(&cfg.task, &cfg.scenarios, &seeds, &cfg.sgd)?;
    let dir = OutputDir::new(out, Header::new("dpsgd", &cfg, cfg.sgd.seed)?)?;
    dir.write_csv("dpsgd_runs.csv", &table.rows)?;
    dir.write_jsonl("dpsgd_summary.jsonl", &table.summary)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WeibullSpec {
    rho1: f64,
    rho2: f64,
    dim: usize,
    trials: usize,
    ks: Vec<usize>,
}

impl Default for WeibullSpec {
    fn default() -> Self {
        Self { rho1: 1.0, rho2: 0.5, dim: 1000, trials: 100, ks: (0..=10).map(|i| i * 100).collect() }
    }
}

/// `convergence` config: the run, an optional k grid and an optional Weibull study.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConvergenceExperiment {
    run: ConvergenceConfig,
    k_sweep: Vec<usize>,
    weibull: Option<WeibullSpec>,
}

fn cmd_convergence(h: &HarnessArgs, out: &Path) -> CmdResult {
    let mut cfg: ConvergenceExperiment = load_or_default(h.config.as_deref())?;
    if let Some(s) = h.seed {
        cfg.run.seed = s;
    }
    cfg.run.validate()?;
    let report = verify_seeds(&cfg.run)?;
    let dir = OutputDir::new(out, Header::new("convergence", &cfg, cfg.run.seed)?)?;
    dir.write_json("convergence_report.json", &report)?;
    if !cfg.k_sweep.is_empty() {
        let sweep = k_sweep(&cfg.run, &cfg.k_sweep)?;
        #[derive(Serialize)]
        struct Row {
            k: usize,
            tau_k: f64,
            compression: f64,
            noise: f64,
            initial_gap: f64,
            clipping: f64,
            quantization: f64,
            lhs: f64,
            rhs: f64,
            pass: bool,
        }
        let rows: Vec<Row> = sweep
            .rows
            .iter()
            .map(|r| Row {
                k: r.k,
                tau_k: r.tau_k,
                compression: r.terms.compression,
                noise: r.terms.noise,
                initial_gap: r.terms.initial_gap,
                clipping: r.terms.clipping,
                quantization: r.terms.quantization,
                lhs: r.lhs,
                rhs: r.rhs,
                pass: r.pass,
            })
            .collect();
        dir.write_csv("convergence_ksweep.csv", &rows)?;
    }
    if let Some(w) = &cfg.weibull {
        let profile = weibull_tau_profile(w.rho1, w.rho2, w.dim, w.trials, cfg.run.seed, &w.ks)?;
        dir.write_csv("convergence_weibull.csv", &profile)?;
    }
    let failed = report.per_seed.iter().filter(|r| r.pass == Some(false)).count();
    if report.averaged.pass == Some(false) || failed > 0 {
        return Err(fail(EXIT_INTERNAL, format!("convergence bound violated ({failed} seeded runs)")));
    }
    Ok(())
}

fn cmd_compress_bench(h: &HarnessArgs, out: &Path) -> CmdResult {
    let mut cfg: BenchConfig = load_or_default(h.config.as_deref())?;
    if let Some(s) = h.seed {
        cfg.seed = s;
    }
    let rows = compress_bench(&cfg)?;
    let dir = OutputDir::new(out, Header::new("compress-bench", &cfg, cfg.seed)?)?;
    dir.write_csv("compress_bench.csv", &rows)?;
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| fail(EXIT_USAGE, format!("--threads: {e}")))?;
    }
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Accountant(a) => cmd_accountant(a),
        Command::Pate(h) => cmd_pate(h, out),
        Command::Dpsgd(h) => cmd_dpsgd(h, out),
        Command::Convergence(h) => cmd_convergence(h, out),
        Command::CompressBench(h) => cmd_compress_bench(h, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match panic::catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("dpvote: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
