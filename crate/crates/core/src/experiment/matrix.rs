//! Multi-seed experiment orchestration.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policies::{PlugInPolicy, Policy};
use super::regimes::{derive_budget_regimes, RegimeError, RegimeName};
use crate::constrainer::StepSize;
use crate::lp::hindsight_opt;
use crate::predictor::PredictorConfig;
use crate::scheduler::{GradientSource, PhiMinMode, PredictionMode, SchedulerConfig};
use crate::trace::{Environment, Trace};
use crate::types::{dimension_name, BudgetVector};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("invalid matrix spec: {0}")]
    Spec(String),
    #[error("dataset {dataset}: {source}")]
    Regime {
        dataset: String,
        #[source]
        source: RegimeError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn default_ratio() -> f64 {
    0.05
}
fn default_samples() -> usize {
    10
}
fn all_policies() -> Vec<Policy> {
    Policy::ALL.to_vec()
}
fn all_regimes() -> Vec<RegimeName> {
    RegimeName::ALL.to_vec()
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

/// Scheduler settings shared by every cell; budgets, `T0` and seeds come
/// from the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerTemplate {
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "one")]
    pub refit_every: usize,
    #[serde(default)]
    pub phi_min: PhiMinMode,
    #[serde(default)]
    pub step_size: Option<StepSize>,
    #[serde(default)]
    pub gradient_bound: Option<f64>,
    #[serde(default)]
    pub gradient_source: GradientSource,
    #[serde(default = "yes")]
    pub charge_initial_phase: bool,
    #[serde(default)]
    pub predictor: Option<PredictorConfig>,
}

impl Default for SchedulerTemplate {
    fn default() -> Self {
        Self {
            rho: None,
            refit_every: 1,
            phi_min: PhiMinMode::default(),
            step_size: None,
            gradient_bound: None,
            gradient_source: GradientSource::default(),
            charge_initial_phase: true,
            predictor: None,
        }
    }
}

impl SchedulerTemplate {
    pub fn build(
        &self,
        horizon: usize,
        t0: usize,
        budget: BudgetVector,
        seed: u64,
    ) -> SchedulerConfig {
        let mut c = SchedulerConfig::new(horizon, t0, budget).with_seed(seed);
        c.rho = self.rho;
        c.refit_every = self.refit_every;
        c.phi_min = self.phi_min;
        c.step_size = self.step_size;
        c.gradient_bound = self.gradient_bound;
        c.gradient_source = self.gradient_source;
        c.charge_initial_phase = self.charge_initial_phase;
        if let Some(p) = &self.predictor {
            c.predictor = *p;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "all_policies")]
    pub policies: Vec<Policy>,
    #[serde(default = "all_regimes")]
    pub regimes: Vec<RegimeName>,
    /// Fraction of the horizon spent in the initial phase.
    #[serde(default = "default_ratio")]
    pub init_ratio: f64,
    /// Extra scheduler runs at these initial-phase ratios.
    #[serde(default)]
    pub init_ratio_sweep: Vec<f64>,
    /// Extra scheduler runs with each adapter replaced by a random predictor.
    #[serde(default)]
    pub ablations: bool,
    /// Compute regret against the hindsight LP.
    #[serde(default)]
    pub regret: bool,
    /// Points on each regret curve.
    #[serde(default = "default_samples")]
    pub regret_samples: usize,
    #[serde(default)]
    pub scheduler: SchedulerTemplate,
}

impl MatrixSpec {
    pub fn new(horizon: usize, seeds: Vec<u64>) -> Self {
        Self {
            horizon,
            seeds,
            policies: all_policies(),
            regimes: all_regimes(),
            init_ratio: default_ratio(),
            init_ratio_sweep: Vec::new(),
            ablations: false,
            regret: false,
            regret_samples: default_samples(),
            scheduler: SchedulerTemplate::default(),
        }
    }

    /// `T0 = max(1, round(ratio·T/(A+1)))`.
    pub fn t0_for(&self, ratio: f64, num_actions: usize) -> usize {
        ((ratio * self.horizon as f64 / (num_actions + 1) as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        let bad = |m: &str| Err(MatrixError::Spec(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        for r in std::iter::once(&self.init_ratio).chain(&self.init_ratio_sweep) {
            if !(*r > 0.0 && *r < 1.0) {
                return bad("initial-phase ratios must lie in (0, 1)");
            }
        }
        Ok(())
    }
}

/// A named environment in the matrix.
pub struct Dataset {
    pub name: String,
    pub env: Box<dyn Environment + Send + Sync>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, env: impl Environment + Send + 'static) -> Self {
        Self {
            name: name.into(),
            env: Box::new(env),
        }
    }

    pub fn from_trace(name: impl Into<String>, trace: Trace) -> Self {
        Self::new(name, trace)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub regime: RegimeName,
    pub policy: String,
    pub variant: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub avg_reward: f64,
    pub reward_sum: f64,
    pub rounds_executed: usize,
    pub consumed: Vec<f64>,
    pub budget: Vec<f64>,
    /// Consumed over budget per dimension; 0 where the budget is 0.
    pub utilization: Vec<f64>,
    pub within_budget: bool,
    pub stop_reason: String,
    #[serde(default)]
    pub hindsight_opt: Option<f64>,
    #[serde(default)]
    pub regret: Option<f64>,
    /// `(t, t·OPT/T − reward collected in the first t rounds)`.
    #[serde(default)]
    pub regret_curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    #[serde(default)]
    pub metrics: Option<CellMetrics>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub regime: RegimeName,
    pub policy: String,
    pub variant: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_reward: f64,
    /// Sample standard deviation; absent with fewer than two runs.
    pub std_reward: Option<f64>,
    pub min_reward: f64,
    pub max_reward: f64,
    pub mean_rounds: f64,
    pub mean_utilization: Vec<f64>,
    pub mean_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: MatrixSpec,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

pub const TIDY_HEADER: [&str; 7] = [
    "dataset", "regime", "policy", "variant", "seed", "metric", "value",
];

impl ExperimentReport {
    pub fn aggregate(
        &self,
        dataset: &str,
        regime: RegimeName,
        policy: &str,
        variant: &str,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.dataset == dataset && a.regime == regime && a.policy == policy && a.variant == variant
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), MatrixError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, MatrixError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// One row per aggregate.
    pub fn write_summary_csv(&self, path: &Path) -> Result<(), MatrixError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "dataset",
            "regime",
            "policy",
            "variant",
            "runs",
            "failures",
            "mean_reward",
            "std_reward",
            "min_reward",
            "max_reward",
            "mean_rounds",
            "mean_regret",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for a in &self.aggregates {
            w.write_record([
                a.dataset.clone(),
                a.regime.label().to_string(),
                a.policy.clone(),
                a.variant.clone(),
                a.runs.to_string(),
                a.failures.to_string(),
                a.mean_reward.to_string(),
                opt(a.std_reward),
                a.min_reward.to_string(),
                a.max_reward.to_string(),
                a.mean_rounds.to_string(),
                opt(a.mean_regret),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format rows, one per successful cell and requested metric.
    /// Known metrics: `avg_reward`, `rounds_executed`, `regret`,
    /// `utilization_<dim>`.
    pub fn tidy_rows(&self, metrics: &[&str]) -> Vec<[String; 7]> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            let Some(m) = &cell.metrics else { continue };
            for metric in metrics {
                let value = match *metric {
                    "avg_reward" => Some(m.avg_reward),
                    "rounds_executed" => Some(m.rounds_executed as f64),
                    "regret" => m.regret,
                    other => other.strip_prefix("utilization_").and_then(|dim| {
                        let dims = m.utilization.len();
                        (0..dims)
                            .find(|&c| dimension_name(c, dims) == dim)
                            .map(|c| m.utilization[c])
                    }),
                };
                if let Some(v) = value {
                    let k = &cell.key;
                    rows.push([
                        k.dataset.clone(),
                        k.regime.label().to_string(),
                        k.policy.clone(),
                        k.variant.clone(),
                        k.seed.to_string(),
                        metric.to_string(),
                        v.to_string(),
                    ]);
                }
            }
        }
        rows
    }

    pub fn write_tidy_csv(&self, path: &Path, metrics: &[&str]) -> Result<usize, MatrixError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TIDY_HEADER)?;
        let rows = self.tidy_rows(metrics);
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(rows.len())
    }

    /// `t, regret` for every cell that has a curve, one file per cell.
    pub fn write_regret_curves(&self, dir: &Path) -> Result<usize, MatrixError> {
        std::fs::create_dir_all(dir)?;
        let mut n = 0;
        for cell in &self.cells {
            let Some(m) = &cell.metrics else { continue };
            if m.regret_curve.is_empty() {
                continue;
            }
            let k = &cell.key;
            let name = format!(
                "regret_{}_{}_{}_{}_{}.csv",
                k.dataset,
                k.regime.label(),
                k.policy,
                k.variant,
                k.seed
            );
            let mut w = csv::Writer::from_path(dir.join(name))?;
            w.write_record(["t", "regret"])?;
            for (t, r) in &m.regret_curve {
                w.write_record([t.to_string(), r.to_string()])?;
            }
            w.flush()?;
            n += 1;
        }
        Ok(n)
    }
}

#[derive(Debug, Clone)]
enum Variant {
    Default,
    Ratio(f64),
    Ablated(PredictionMode),
}

fn ablation_variants(num_dims: usize) -> Vec<(String, Variant)> {
    let mut out = vec![(
        "ablate_reward".to_string(),
        Variant::Ablated(PredictionMode::Ablated {
            reward: true,
            cost_dims: Vec::new(),
        }),
    )];
    for c in 0..num_dims {
        out.push((
            format!("ablate_{}", dimension_name(c, num_dims)),
            Variant::Ablated(PredictionMode::Ablated {
                reward: false,
                cost_dims: vec![c],
            }),
        ));
    }
    out
}

struct Job<'a> {
    key: CellKey,
    env: &'a dyn Environment,
    policy: &'a dyn PlugInPolicy,
    variant: Variant,
    budget: BudgetVector,
    hindsight: Option<f64>,
}

pub fn run_matrix(
    spec: &MatrixSpec,
    datasets: &[Dataset],
) -> Result<ExperimentReport, MatrixError> {
    run_matrix_with(spec, datasets, &[])
}

/// Like [`run_matrix`], with extra policies appended to the built-in ones.
pub fn run_matrix_with(
    spec: &MatrixSpec,
    datasets: &[Dataset],
    plugins: &[Box<dyn PlugInPolicy>],
) -> Result<ExperimentReport, MatrixError> {
    spec.validate()?;
    let builtin: Vec<Box<dyn PlugInPolicy>> = spec
        .policies
        .iter()
        .map(|p| Box::new(*p) as Box<dyn PlugInPolicy>)
        .collect();
    let policies: Vec<&dyn PlugInPolicy> =
        builtin.iter().chain(plugins).map(|b| b.as_ref()).collect();

    let mut jobs = Vec::new();
    for ds in datasets {
        let env: &dyn Environment = ds.env.as_ref();
        let regimes =
            derive_budget_regimes(env, spec.horizon).map_err(|source| MatrixError::Regime {
                dataset: ds.name.clone(),
                source,
            })?;
        for regime in regimes.iter().filter(|r| spec.regimes.contains(&r.name)) {
            let hindsight = if spec.regret {
                // Failures surface per cell through the missing regret.
                hindsight_opt(env, &regime.budget, spec.horizon)
                    .map_err(|e| log::warn!("{}: hindsight LP failed: {e}", ds.name))
                    .ok()
            } else {
                None
            };
            for policy in &policies {
                let label = policy.label();
                let mut variants = vec![("default".to_string(), Variant::Default)];
                if label == Policy::M2Cmab.label() {
                    for r in &spec.init_ratio_sweep {
                        variants.push((format!("init_ratio_{r}"), Variant::Ratio(*r)));
                    }
                    if spec.ablations {
                        variants.extend(ablation_variants(env.num_dims()));
                    }
                }
                for (vname, variant) in variants {
                    for &seed in &spec.seeds {
                        jobs.push(Job {
                            key: CellKey {
                                dataset: ds.name.clone(),
                                regime: regime.name,
                                policy: label.clone(),
                                variant: vname.clone(),
                                seed,
                            },
                            env,
                            policy: *policy,
                            variant: variant.clone(),
                            budget: regime.budget.clone(),
                            hindsight,
                        });
                    }
                }
            }
        }
    }
    jobs.sort_by(|a, b| a.key.cmp(&b.key));

    let cells: Vec<CellResult> = jobs.par_iter().map(|job| run_cell(spec, job)).collect();
    let aggregates = aggregate(&cells);
    Ok(ExperimentReport {
        spec: spec.clone(),
        cells,
        aggregates,
    })
}

fn run_cell(spec: &MatrixSpec, job: &Job<'_>) -> CellResult {
    let a = job.env.num_actions();
    let ratio = match job.variant {
        Variant::Ratio(r) => r,
        _ => spec.init_ratio,
    };
    let mut config = spec.scheduler.build(
        spec.horizon,
        spec.t0_for(ratio, a),
        job.budget.clone(),
        job.key.seed,
    );
    if let Variant::Ablated(mode) = &job.variant {
        config.prediction = mode.clone();
    }
    let outcome = catch_unwind(AssertUnwindSafe(|| job.policy.run(job.env, &config)));
    let report = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return failed(job, e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            return failed(job, format!("panicked: {msg}"));
        }
    };
    let ledger = &report.ledger;
    let budget = job.budget.as_slice();
    let consumed = ledger.consumed.as_slice().to_vec();
    let utilization = consumed
        .iter()
        .zip(budget)
        .map(|(u, b)| if *b > 0.0 { u / b } else { 0.0 })
        .collect();
    let (regret, regret_curve) = match job.hindsight {
        Some(opt) => {
            let per_round = opt / spec.horizon as f64;
            let samples = spec.regret_samples.max(1);
            let checkpoints: Vec<usize> = (1..=samples)
                .map(|k| (k * spec.horizon).div_ceil(samples))
                .collect();
            let mut curve = Vec::with_capacity(samples);
            let mut cum = 0.0;
            let mut log = ledger.decision_log.iter().peekable();
            for &t in &checkpoints {
                while let Some(d) = log.next_if(|d| d.round < t) {
                    cum += d.reward;
                }
                curve.push((t, per_round * t as f64 - cum));
            }
            (Some(opt - ledger.reward_sum), curve)
        }
        None => (None, Vec::new()),
    };
    CellResult {
        key: job.key.clone(),
        metrics: Some(CellMetrics {
            avg_reward: ledger.avg_reward(),
            reward_sum: ledger.reward_sum,
            rounds_executed: ledger.rounds_executed,
            within_budget: ledger.within_budget(&job.budget),
            consumed,
            budget: budget.to_vec(),
            utilization,
            stop_reason: report.stop_reason.label(job.env.num_dims()),
            hindsight_opt: job.hindsight,
            regret,
            regret_curve,
        }),
        error: None,
    }
}

fn failed(job: &Job<'_>, msg: String) -> CellResult {
    log::warn!("cell {:?} failed: {msg}", job.key);
    CellResult {
        key: job.key.clone(),
        metrics: None,
        error: Some(msg),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n − 1` denominator).
pub fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn aggregate(cells: &[CellResult]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, RegimeName, String, String), Vec<&CellResult>> =
        BTreeMap::new();
    for c in cells {
        let k = &c.key;
        groups
            .entry((
                k.dataset.clone(),
                k.regime,
                k.policy.clone(),
                k.variant.clone(),
            ))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((dataset, regime, policy, variant), group)| {
            let ok: Vec<&CellMetrics> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
            let rewards: Vec<f64> = ok.iter().map(|m| m.avg_reward).collect();
            let dims = ok.first().map_or(0, |m| m.utilization.len());
            let mean_utilization = (0..dims)
                .map(|c| mean(&ok.iter().map(|m| m.utilization[c]).collect::<Vec<_>>()))
                .collect();
            let regrets: Vec<f64> = ok.iter().filter_map(|m| m.regret).collect();
            Aggregate {
                dataset,
                regime,
                policy,
                variant,
                runs: ok.len(),
                failures: group.len() - ok.len(),
                mean_reward: if rewards.is_empty() {
                    f64::NAN
                } else {
                    mean(&rewards)
                },
                std_reward: sample_std(&rewards),
                min_reward: rewards.iter().copied().fold(f64::INFINITY, f64::min),
                max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_rounds: if ok.is_empty() {
                    0.0
                } else {
                    mean(
                        &ok.iter()
                            .map(|m| m.rounds_executed as f64)
                            .collect::<Vec<_>>(),
                    )
                },
                mean_utilization,
                mean_regret: (!regrets.is_empty() && regrets.len() == ok.len())
                    .then(|| mean(&regrets)),
            }
        })
        .collect()
}
