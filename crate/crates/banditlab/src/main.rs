//! Command-line front end for the bandit laboratory.
//!
//! Subcommands: `run` (one seeded run), `suite` (agents × seeds with
//! aggregate tables), `normalize` (rescale a suite table against a baseline
//! row), `ntk-drift` (kernel drift across network widths), `ablate-memory`
//! (replay-capacity sweep), and `gen-data` (write the bundled synthetic
//! dataset generators to disk).
//!
//! Agent settings resolve in three layers: built-in defaults, then a flat
//! key-value `--config` file, then individual flags. Config keys use the
//! same names as the flags (`hidden_dim`, `capacity_per_arm`,
//! `batch_multiplier`, `inner_steps`, `full_retrain_period`,
//! `full_retrain_iters`, `base_lr`, `lr_decay`, `a0`, `b0`, `floor`,
//! `init_scheme`, `schedule`).

use banditlab::agents::{AgentConfig, AgentKind, TrainSchedule};
use banditlab::datagen::{write_dataset, StockDataset};
use banditlab::env::{DatasetBandit, Schema};
use banditlab::harness::{
    self, DriftConfig, EnvSpec, HarnessError, RunConfig, SuiteJob,
};
use banditlab::mlp::InitScheme;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "banditlab",
    version,
    about = "Contextual-bandit laboratory: linear and neural-linear Thompson sampling \
             with limited-memory likelihood matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Agent hyperparameter overrides shared by the run-style subcommands.
/// Anything left unset falls back to the config file, then to defaults.
#[derive(Args, Clone, Default)]
struct AgentFlags {
    /// Flat key-value settings file (lowest-precedence override layer).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hidden-layer width of the representation network.
    #[arg(long)]
    hidden: Option<usize>,
    /// Replay minibatch size as a multiple of the number of arms.
    #[arg(long)]
    batch_multiplier: Option<usize>,
    /// Likelihood-matching / online-training iterations per round.
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Rounds between full retrains (full-memory agent).
    #[arg(long)]
    full_retrain_period: Option<usize>,
    /// Training iterations per full retrain.
    #[arg(long)]
    full_retrain_iters: Option<usize>,
    /// Base SGD learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Hyperbolic learning-rate decay constant.
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Inverse-gamma noise prior shape.
    #[arg(long)]
    a0: Option<f64>,
    /// Inverse-gamma noise prior scale.
    #[arg(long)]
    b0: Option<f64>,
    /// Eigenvalue floor for PSD projections.
    #[arg(long)]
    floor: Option<f64>,
    /// Weight initialization: standard | ntk.
    #[arg(long)]
    init_scheme: Option<String>,
    /// Training schedule: online | phased:PERIOD:ITERS.
    #[arg(long)]
    schedule: Option<String>,
}

/// Dataset selection shared by every environment-driven subcommand.
#[derive(Args, Clone)]
struct DataFlags {
    /// Dataset CSV path.
    #[arg(long)]
    dataset: PathBuf,
    /// Schema file (default: the dataset path with a .schema extension).
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl DataFlags {
    fn schema_path(&self) -> PathBuf {
        self.schema
            .clone()
            .unwrap_or_else(|| self.dataset.with_extension("schema"))
    }

    fn env_spec(&self) -> EnvSpec {
        EnvSpec::Dataset { csv: self.dataset.clone(), schema: self.schema_path() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one seeded run and write steps.csv, summary.csv, manifest.txt.
    Run {
        /// Agent name (uniform, linear-ts, neural-linear-full, lim2,
        /// neural-linear-mm, neural-linear-naive, neural-linear-ntk).
        #[arg(long)]
        agent: String,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-arm replay memory size.
        #[arg(long)]
        memory: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Write an agent snapshot every this many rounds.
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[command(flatten)]
        agent_flags: AgentFlags,
    },
    /// Run several agents across seeds; write table.csv and raw.csv.
    Suite {
        /// Comma-separated agent names.
        #[arg(long)]
        agent: String,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        horizon: usize,
        /// Seed count ("10" means seeds 0..9) or explicit comma list ("3,5,9").
        #[arg(long, default_value = "10")]
        seeds: String,
        /// Per-arm replay memory size.
        #[arg(long)]
        memory: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        agent_flags: AgentFlags,
    },
    /// Rescale a suite table.csv against a baseline row; write normalized.csv.
    Normalize {
        /// Suite table.csv produced by the suite subcommand.
        #[arg(long)]
        table: PathBuf,
        /// Label of the baseline (random-policy) row.
        #[arg(long, default_value = "uniform")]
        baseline: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train networks of several widths on one shared uniform-policy data
    /// stream and record neural-tangent-kernel drift; write drift.csv.
    NtkDrift {
        #[command(flatten)]
        data: DataFlags,
        /// Comma-separated hidden widths.
        #[arg(long, default_value = "50,1024")]
        widths: String,
        /// Seed count or explicit comma list.
        #[arg(long, default_value = "10")]
        seeds: String,
        /// Training iterations per network.
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Kernel sampling period in iterations.
        #[arg(long, default_value_t = 50)]
        sample_period: usize,
        /// Replay minibatch size as a multiple of the number of arms.
        #[arg(long, default_value_t = 16)]
        batch_multiplier: usize,
        /// Per-arm replay memory size.
        #[arg(long, default_value_t = 100)]
        memory: usize,
        /// Base SGD learning rate.
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Hyperbolic learning-rate decay constant.
        #[arg(long, default_value_t = 1e-3)]
        lr_decay: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep per-arm replay memory sizes; one suite row per agent@size.
    AblateMemory {
        /// Comma-separated agent names.
        #[arg(long, default_value = "lim2,neural-linear-naive")]
        agent: String,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long, default_value_t = 5000)]
        horizon: usize,
        /// Seed count or explicit comma list.
        #[arg(long, default_value = "10")]
        seeds: String,
        /// Comma-separated per-arm memory sizes.
        #[arg(long, default_value = "40,100,200")]
        memory: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        agent_flags: AgentFlags,
    },
    /// Write one (or all) of the bundled synthetic dataset generators.
    GenData {
        /// statlog_like | mushroom_like | census_like | smartphones_like | all.
        #[arg(long, default_value = "all")]
        name: String,
        /// Row count (default: the generator's standard size).
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run { agent, data, horizon, seed, memory, out, checkpoint_every, agent_flags } => {
            cmd_run(&agent, &data, horizon, seed, memory, &out, checkpoint_every, &agent_flags)
        }
        Command::Suite { agent, data, horizon, seeds, memory, out, parallel, agent_flags } => {
            cmd_suite(&agent, &data, horizon, &seeds, memory, &out, parallel, &agent_flags)
        }
        Command::Normalize { table, baseline, out } => cmd_normalize(&table, &baseline, &out),
        Command::NtkDrift {
            data,
            widths,
            seeds,
            iters,
            sample_period,
            batch_multiplier,
            memory,
            lr,
            lr_decay,
            out,
        } => {
            let cfg = DriftConfig {
                widths: parse_usize_list(&widths, "widths")?,
                seeds: parse_seeds(&seeds)?,
                iters,
                sample_period,
                batch_multiplier,
                capacity_per_arm: memory,
                base_lr: lr,
                lr_decay,
            };
            cmd_ntk_drift(&data, cfg, &out)
        }
        Command::AblateMemory { agent, data, horizon, seeds, memory, out, parallel, agent_flags } => {
            cmd_ablate(&agent, &data, horizon, &seeds, &memory, &out, parallel, &agent_flags)
        }
        Command::GenData { name, rows, seed, out } => cmd_gen_data(&name, rows, seed, &out),
    }
}

// ── Settings resolution ─────────────────────────────────────────────────────

fn parse_init_scheme(s: &str) -> Result<InitScheme, String> {
    match s {
        "standard" => Ok(InitScheme::Standard),
        "ntk" => Ok(InitScheme::Ntk),
        other => Err(format!("unknown init_scheme {other:?} (expected standard | ntk)")),
    }
}

fn parse_schedule(s: &str) -> Result<TrainSchedule, String> {
    if s == "online" {
        return Ok(TrainSchedule::Online);
    }
    if let Some(rest) = s.strip_prefix("phased:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() == 2 {
            let period = parts[0].parse().map_err(|_| format!("bad phased period {:?}", parts[0]))?;
            let iters = parts[1].parse().map_err(|_| format!("bad phased iters {:?}", parts[1]))?;
            return Ok(TrainSchedule::Phased { period, iters });
        }
    }
    Err(format!("unknown schedule {s:?} (expected online | phased:PERIOD:ITERS)"))
}

fn apply_setting(cfg: &mut AgentConfig, key: &str, value: &str) -> Result<(), String> {
    let bad = |what: &str| format!("bad {what} value {value:?}");
    match key {
        "hidden_dim" => cfg.hidden_dim = value.parse().map_err(|_| bad(key))?,
        "capacity_per_arm" => cfg.capacity_per_arm = value.parse().map_err(|_| bad(key))?,
        "batch_multiplier" => cfg.batch_multiplier = value.parse().map_err(|_| bad(key))?,
        "inner_steps" => cfg.inner_steps = value.parse().map_err(|_| bad(key))?,
        "full_retrain_period" => cfg.full_retrain_period = value.parse().map_err(|_| bad(key))?,
        "full_retrain_iters" => cfg.full_retrain_iters = value.parse().map_err(|_| bad(key))?,
        "base_lr" => cfg.base_lr = value.parse().map_err(|_| bad(key))?,
        "lr_decay" => cfg.lr_decay = value.parse().map_err(|_| bad(key))?,
        "a0" => cfg.a0 = value.parse().map_err(|_| bad(key))?,
        "b0" => cfg.b0 = value.parse().map_err(|_| bad(key))?,
        "floor" => cfg.floor = value.parse().map_err(|_| bad(key))?,
        "init_scheme" => cfg.init_scheme = parse_init_scheme(value)?,
        "schedule" => cfg.schedule = parse_schedule(value)?,
        other => return Err(format!("unknown config key {other:?}")),
    }
    Ok(())
}

/// Applies a flat key-value settings file: one `key value` or `key = value`
/// per line, `#` comments.
fn apply_config_file(cfg: &mut AgentConfig, path: &Path) -> CliResult {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => line
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or(format!("config line {}: no value in {line:?}", i + 1))?,
        };
        apply_setting(cfg, key, value).map_err(|e| format!("config line {}: {e}", i + 1))?;
    }
    Ok(())
}

/// Defaults → config file → flags, in increasing precedence.
fn resolve_agent_config(
    kind: AgentKind,
    flags: &AgentFlags,
    memory: Option<usize>,
) -> Result<AgentConfig, Box<dyn std::error::Error>> {
    let mut cfg = AgentConfig::new(kind);
    if let Some(path) = &flags.config {
        apply_config_file(&mut cfg, path)?;
    }
    if let Some(v) = flags.hidden {
        cfg.hidden_dim = v;
    }
    if let Some(v) = memory {
        cfg.capacity_per_arm = v;
    }
    if let Some(v) = flags.batch_multiplier {
        cfg.batch_multiplier = v;
    }
    if let Some(v) = flags.inner_steps {
        cfg.inner_steps = v;
    }
    if let Some(v) = flags.full_retrain_period {
        cfg.full_retrain_period = v;
    }
    if let Some(v) = flags.full_retrain_iters {
        cfg.full_retrain_iters = v;
    }
    if let Some(v) = flags.lr {
        cfg.base_lr = v;
    }
    if let Some(v) = flags.lr_decay {
        cfg.lr_decay = v;
    }
    if let Some(v) = flags.a0 {
        cfg.a0 = v;
    }
    if let Some(v) = flags.b0 {
        cfg.b0 = v;
    }
    if let Some(v) = flags.floor {
        cfg.floor = v;
    }
    if let Some(s) = &flags.init_scheme {
        cfg.init_scheme = parse_init_scheme(s)?;
    }
    if let Some(s) = &flags.schedule {
        cfg.schedule = parse_schedule(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

// ── List parsing ────────────────────────────────────────────────────────────

/// "10" → seeds 0..9; "3,5,9" → exactly those.
fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let parsed = if s.contains(',') {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<u64>().map_err(|_| format!("bad seed {p:?}")))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let count: u64 = s.trim().parse().map_err(|_| format!("bad seed count {s:?}"))?;
        (0..count).collect()
    };
    if parsed.is_empty() {
        return Err(format!("no seeds in {s:?}"));
    }
    Ok(parsed)
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>, String> {
    let out: Vec<usize> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad {what} entry {p:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err(format!("no entries in {what} list {s:?}"));
    }
    Ok(out)
}

fn parse_agent(name: &str) -> Result<AgentKind, String> {
    AgentKind::from_name(name).ok_or(format!("unknown agent {name:?}"))
}

fn parse_agent_list(s: &str) -> Result<Vec<AgentKind>, String> {
    let out: Vec<AgentKind> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_agent(p.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err(format!("no agents in {s:?}"));
    }
    Ok(out)
}

// ── Subcommand bodies ───────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    agent: &str,
    data: &DataFlags,
    horizon: usize,
    seed: u64,
    memory: Option<usize>,
    out: &Path,
    checkpoint_every: Option<usize>,
    flags: &AgentFlags,
) -> CliResult {
    let kind = parse_agent(agent)?;
    let mut config = RunConfig::new(
        resolve_agent_config(kind, flags, memory)?,
        data.env_spec(),
        horizon,
        seed,
    );
    config.out_dir = Some(out.to_path_buf());
    config.checkpoint_every = checkpoint_every;
    match harness::run(&config) {
        Ok(record) => {
            harness::emit_run_outputs(&config, &record, out)?;
            println!(
                "{} on {}: T={horizon} seed={seed} cumulative_reward={:.2} cumulative_regret={:.2}",
                kind.name(),
                data.dataset.display(),
                record.cumulative_reward,
                record.cumulative_regret(),
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Err(HarnessError::Truncated { completed, horizon, record }) => {
            harness::emit_run_outputs(&config, &record, out)?;
            Err(format!(
                "run truncated at {completed}/{horizon} rounds (environment exhausted); \
                 partial outputs written to {}",
                out.display()
            )
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn print_suite(result: &harness::SuiteResult) {
    println!("{:<28} {:>7} {:>7} {:>12} {:>10}", "label", "ok", "failed", "mean", "std");
    for row in result.rows() {
        println!(
            "{:<28} {:>7} {:>7} {:>12.2} {:>10.2}",
            row.label, row.runs_ok, row.runs_failed, row.mean_reward, row.std_reward
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_suite(
    agent: &str,
    data: &DataFlags,
    horizon: usize,
    seeds: &str,
    memory: Option<usize>,
    out: &Path,
    parallel: usize,
    flags: &AgentFlags,
) -> CliResult {
    let kinds = parse_agent_list(agent)?;
    let seeds = parse_seeds(seeds)?;
    let jobs: Vec<SuiteJob> = kinds
        .iter()
        .map(|&kind| {
            Ok(SuiteJob {
                label: kind.name().to_string(),
                config: RunConfig::new(
                    resolve_agent_config(kind, flags, memory)?,
                    data.env_spec(),
                    horizon,
                    0,
                ),
            })
        })
        .collect::<Result<_, Box<dyn std::error::Error>>>()?;
    let result = harness::run_suite(&jobs, &seeds, parallel)?;
    harness::emit_suite_outputs(&result, out)?;
    print_suite(&result);
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_normalize(table: &Path, baseline: &str, out: &Path) -> CliResult {
    let text = std::fs::read_to_string(table)
        .map_err(|e| format!("cannot read table {}: {e}", table.display()))?;
    let mut raw = Vec::new();
    let mut baseline_value = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(format!("table line {}: expected label,...,mean_reward", i + 1).into());
        }
        let label = fields[0].to_string();
        let mean: f64 = fields[3]
            .parse()
            .map_err(|_| format!("table line {}: bad mean {:?}", i + 1, fields[3]))?;
        if label == baseline {
            baseline_value = Some(mean);
        } else {
            raw.push((label, mean));
        }
    }
    let baseline_value =
        baseline_value.ok_or(format!("no row labeled {baseline:?} in {}", table.display()))?;
    let scores = harness::normalized_scores(&raw, baseline_value)?;
    harness::emit_normalized_outputs(&scores, baseline_value, out)?;
    println!("{:<28} {:>10}", "label", "normalized");
    for (label, s) in &scores {
        println!("{:<28} {:>10.3}", label, s);
    }
    println!("baseline {baseline} = {baseline_value:.2}; wrote {}", out.display());
    Ok(())
}

fn cmd_ntk_drift(data: &DataFlags, cfg: DriftConfig, out: &Path) -> CliResult {
    let schema = Schema::load(&data.schema_path())?;
    let dataset = DatasetBandit::load_csv(&data.dataset, &schema)?;
    let rows = harness::ntk_drift_experiment(&dataset, &cfg)?;
    harness::emit_drift_outputs(&rows, out)?;
    println!("{:<8} {:>20}", "width", "mean relative drift");
    for &width in &cfg.widths {
        let drift = harness::mean_relative_drift(&rows, width)
            .ok_or(format!("no drift rows for width {width}"))?;
        println!("{:<8} {:>20.4}", width, drift);
    }
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    agent: &str,
    data: &DataFlags,
    horizon: usize,
    seeds: &str,
    memory: &str,
    out: &Path,
    parallel: usize,
    flags: &AgentFlags,
) -> CliResult {
    let kinds = parse_agent_list(agent)?;
    let seeds = parse_seeds(seeds)?;
    let sizes = parse_usize_list(memory, "memory")?;
    let mut jobs = Vec::new();
    for &kind in &kinds {
        for &size in &sizes {
            jobs.push(SuiteJob {
                label: format!("{}@{}", kind.name(), size),
                config: RunConfig::new(
                    resolve_agent_config(kind, flags, Some(size))?,
                    data.env_spec(),
                    horizon,
                    0,
                ),
            });
        }
    }
    let result = harness::run_suite(&jobs, &seeds, parallel)?;
    harness::emit_suite_outputs(&result, out)?;
    print_suite(&result);
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_gen_data(name: &str, rows: Option<usize>, seed: u64, out: &Path) -> CliResult {
    let kinds = if name == "all" {
        StockDataset::all().to_vec()
    } else {
        vec![StockDataset::from_name(name).ok_or(format!("unknown dataset {name:?}"))?]
    };
    for kind in kinds {
        let n = rows.unwrap_or(kind.default_rows());
        let files = write_dataset(kind, out, n, seed)?;
        println!("{}: {} rows -> {}", kind.name(), n, files.csv.display());
    }
    Ok(())
}
