use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Args;
use m2cmab::embed::PoolingConfig;
use m2cmab::experiment::{
    derive_budget_regimes, generate_synthetic_trace, run_baseline, run_matrix, Dataset,
    ExperimentReport, GeneratorError, GeneratorSpec, Policy,
};
use m2cmab::scheduler::{write_dual_csv, write_rounds_csv, RunSummary};
use m2cmab::{BudgetVector, SchedulerError, Trace};
use serde::Serialize;

use crate::config::{CliConfig, RunSection, SCHEMA_VERSION};
use crate::{runtime, CliError};

fn load_config(path: Option<&Path>) -> Result<CliConfig, CliError> {
    match path {
        Some(p) => CliConfig::load(p),
        None => Ok(CliConfig {
            schema_version: SCHEMA_VERSION,
            ..CliConfig::default()
        }),
    }
}

/// Flag or environment first, then the config file, then the working
/// directory.
fn output_dir(flag: Option<PathBuf>, config: &CliConfig) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn parse_enum<T: serde::de::DeserializeOwned>(value: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(value.replace('-', "_")))
        .map_err(|_| CliError::Config(format!("unknown {what} `{value}`")))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    created_unix_secs: u64,
}

/// The only place wall-clock time is written.
fn write_meta(path: &Path, command: &str) -> Result<(), CliError> {
    let created_unix_secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        path,
        &Meta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            created_unix_secs,
        },
    )
}

fn read_trace(path: &Path) -> Result<Trace, CliError> {
    Trace::read_jsonl(path, PoolingConfig::default())
        .map_err(|e| runtime(format!("trace {}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `linear` or `heterogeneous`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file; defaults to `trace.jsonl` in the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn gen_trace(args: GenTraceArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let mut spec = match (&config.generator, args.tasks) {
        (Some(g), _) => g.clone(),
        (None, Some(n)) => GeneratorSpec::linear(n),
        (None, None) => {
            return Err(CliError::Config(
                "set --tasks or a [generator] section".into(),
            ))
        }
    };
    if let Some(mode) = &args.mode {
        spec.mode = parse_enum(mode, "trace mode")?;
    }
    if let Some(n) = args.tasks {
        spec.num_tasks = n;
    }
    if let Some(a) = args.actions {
        spec.num_actions = a;
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let trace = generate_synthetic_trace(&spec, seed).map_err(|e| match e {
        GeneratorError::InvalidSpec(m) => CliError::Config(m),
        other => runtime(other),
    })?;
    let path = match args.output {
        Some(p) => p,
        None => output_dir(out, &config)?.join("trace.jsonl"),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    trace.write_jsonl(&path).map_err(runtime)?;
    write_meta(&path.with_extension("meta.json"), "gen-trace")?;
    println!("wrote {} tasks to {}", trace.len(), path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// random, latency-first, money-first, threshold-based, optimal or m2cmab.
    #[arg(long)]
    policy: Option<String>,
    /// restricted, normal or generous.
    #[arg(long, conflicts_with = "budget")]
    regime: Option<String>,
    /// Budget totals, comma separated.
    #[arg(long, value_delimiter = ',')]
    budget: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds_csv: bool,
}

#[derive(Serialize)]
struct RunOutput {
    policy: Policy,
    #[serde(flatten)]
    summary: RunSummary,
}

fn scheduler_error(e: SchedulerError) -> CliError {
    match e {
        SchedulerError::Config(m) => CliError::Config(m),
        SchedulerError::Exhausted { .. } => CliError::Config(e.to_string()),
        other => runtime(other),
    }
}

pub fn run(args: RunArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let mut section = match (config.run.clone(), &args.trace) {
        (Some(s), _) => s,
        (None, Some(trace)) => RunSection {
            trace: trace.clone(),
            policy: Policy::M2Cmab,
            horizon: None,
            budget: None,
            regime: None,
            t0: None,
            init_ratio: 0.05,
            rounds_csv: false,
            scheduler: Default::default(),
        },
        (None, None) => return Err(CliError::Config("set --trace or a [run] section".into())),
    };
    if let Some(t) = args.trace {
        section.trace = t;
    }
    if let Some(p) = &args.policy {
        section.policy = parse_enum(p, "policy")?;
    }
    if let Some(r) = &args.regime {
        section.regime = Some(parse_enum(r, "regime")?);
        section.budget = None;
    }
    if let Some(b) = args.budget {
        section.budget = Some(b);
        section.regime = None;
    }
    section.horizon = args.horizon.or(section.horizon);
    section.t0 = args.t0.or(section.t0);
    section.rounds_csv |= args.rounds_csv;
    let config = CliConfig {
        run: Some(section.clone()),
        ..config
    };
    config.validate()?;

    let trace = read_trace(&section.trace)?;
    let horizon = section.horizon.unwrap_or(trace.len());
    let budget = match (&section.budget, section.regime) {
        (Some(b), _) => {
            BudgetVector::new(b.clone()).map_err(|e| CliError::Config(e.to_string()))?
        }
        (None, Some(name)) => {
            let regimes = derive_budget_regimes(&trace, horizon)
                .map_err(|e| CliError::Config(e.to_string()))?;
            regimes
                .into_iter()
                .find(|r| r.name == name)
                .expect("all regimes derived")
                .budget
        }
        (None, None) => unreachable!("validated"),
    };
    let a = trace.num_actions();
    let t0 = section.t0.unwrap_or_else(|| {
        ((section.init_ratio * horizon as f64 / (a + 1) as f64).round() as usize).max(1)
    });
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let mut scheduler = section.scheduler.build(horizon, t0, budget, seed);
    scheduler.record_rounds = section.rounds_csv;

    let report = run_baseline(section.policy, &trace, &scheduler).map_err(scheduler_error)?;
    let dir = output_dir(out, &config)?;
    let output = RunOutput {
        policy: section.policy,
        summary: report.summary(&scheduler),
    };
    write_json(&dir.join("summary.json"), &output)?;
    if section.rounds_csv {
        let dims = trace.tasks()[0].outcomes[0].cost.len();
        write_rounds_csv(&dir.join("rounds.csv"), &report.rounds, dims).map_err(runtime)?;
        write_dual_csv(&dir.join("dual.csv"), &report.rounds, dims).map_err(runtime)?;
    }
    write_meta(&dir.join("run.meta.json"), "run")?;
    println!(
        "{}: {} rounds, average reward {:.4}, stop reason {}",
        section.policy.label(),
        output.summary.rounds_executed,
        output.summary.avg_reward,
        output.summary.stop_reason
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seeds, comma separated; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

pub fn matrix(args: MatrixArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(Some(&args.config))?;
    let mut section = config
        .matrix
        .clone()
        .ok_or_else(|| CliError::Config("missing [matrix] section".into()))?;
    if let Some(seeds) = args.seeds {
        section.spec.seeds = seeds;
        section
            .spec
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let datasets = section
        .datasets
        .iter()
        .map(|d| Ok(Dataset::from_trace(d.name.clone(), read_trace(&d.trace)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = run_matrix(&section.spec, &datasets).map_err(runtime)?;
    let dir = output_dir(out, &config)?;
    report
        .write_json(&dir.join("report.json"))
        .map_err(runtime)?;
    report
        .write_summary_csv(&dir.join("summary.csv"))
        .map_err(runtime)?;
    if section.regret_curves {
        report
            .write_regret_curves(&dir.join("regret"))
            .map_err(runtime)?;
    }
    write_meta(&dir.join("matrix.meta.json"), "matrix")?;
    let failures = report.failures().count();
    for c in report.failures() {
        log::warn!("{:?}: {}", c.key, c.error.as_deref().unwrap_or(""));
    }
    println!(
        "{} cells ({failures} failed), report in {}",
        report.cells.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct RegimesArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Rounds to aggregate over; defaults to the whole trace.
    #[arg(long)]
    rounds: Option<usize>,
}

pub fn regimes(args: RegimesArgs, _out: Option<PathBuf>) -> Result<(), CliError> {
    let trace = read_trace(&args.trace)?;
    let rounds = args.rounds.unwrap_or(trace.len());
    let regimes =
        derive_budget_regimes(&trace, rounds).map_err(|e| CliError::Config(e.to_string()))?;
    let text = serde_json::to_string_pretty(&regimes).map_err(runtime)?;
    println!("{text}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    report: PathBuf,
    /// Tidy CSV path; defaults to `tidy.csv` in the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Metrics to export, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "avg_reward")]
    metrics: Vec<String>,
}

pub fn export_plots(args: ExportArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let report = ExperimentReport::read_json(&args.report)
        .map_err(|e| runtime(format!("report {}: {e}", args.report.display())))?;
    let path = match args.output {
        Some(p) => p,
        None => output_dir(out, &CliConfig::default())?.join("tidy.csv"),
    };
    let metrics: Vec<&str> = args.metrics.iter().map(String::as_str).collect();
    let rows = report.write_tidy_csv(&path, &metrics).map_err(runtime)?;
    println!("wrote {rows} rows to {}", path.display());
    Ok(())
}
