//! Scheduling policies compared in the experiment matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scheduler::{
    run_full, run_initial_phase, PredictionMode, RoundModel, RunReport, SchedulerConfig,
    SchedulerError,
};
use crate::trace::Environment;
use crate::types::{BudgetVector, RunLedger, StopReason, LATENCY, MONEY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Random,
    LatencyFirst,
    MoneyFirst,
    ThresholdBased,
    Optimal,
    #[serde(rename = "m2cmab")]
    M2Cmab,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::Random,
        Policy::LatencyFirst,
        Policy::MoneyFirst,
        Policy::ThresholdBased,
        Policy::Optimal,
        Policy::M2Cmab,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::LatencyFirst => "latency_first",
            Policy::MoneyFirst => "money_first",
            Policy::ThresholdBased => "threshold_based",
            Policy::Optimal => "optimal",
            Policy::M2Cmab => "m2cmab",
        }
    }
}

/// A policy the matrix can run.
pub trait PlugInPolicy: Send + Sync {
    fn label(&self) -> String;
    fn run(
        &self,
        env: &dyn Environment,
        config: &SchedulerConfig,
    ) -> Result<RunReport, SchedulerError>;
}

impl PlugInPolicy for Policy {
    fn label(&self) -> String {
        Policy::label(*self).to_string()
    }

    fn run(
        &self,
        env: &dyn Environment,
        config: &SchedulerConfig,
    ) -> Result<RunReport, SchedulerError> {
        run_baseline(*self, env, config)
    }
}

pub fn run_baseline(
    policy: Policy,
    env: &dyn Environment,
    config: &SchedulerConfig,
) -> Result<RunReport, SchedulerError> {
    match policy {
        Policy::M2Cmab => run_full(env, config),
        Policy::Optimal => {
            let mut oracle = config.clone();
            oracle.prediction = PredictionMode::Oracle;
            run_full(env, &oracle)
        }
        Policy::Random => run_random(env, config),
        Policy::LatencyFirst | Policy::MoneyFirst | Policy::ThresholdBased => {
            run_greedy(policy, env, config)
        }
    }
}

fn empty_report(ledger: RunLedger) -> RunReport {
    RunReport {
        ledger,
        stop_reason: StopReason::Horizon,
        lambda: 0.0,
        opt_hat: 0.0,
        m_t0: 0.0,
        e_r: 0.0,
        e_c: 0.0,
        rounds: Vec::new(),
        final_dual: None,
    }
}

/// Uniformly random actions from the first round, no initial phase.
fn run_random(
    env: &dyn Environment,
    config: &SchedulerConfig,
) -> Result<RunReport, SchedulerError> {
    config.validate(env)?;
    let a = env.num_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(4);
    let mut report = empty_report(RunLedger::new(env.num_dims()));
    for t in 0..config.horizon {
        let action = rng.random_range(0..a);
        if let Err(reason) =
            crate::scheduler::play(env, &mut report.ledger, Some(&config.budget), t, action)
        {
            report.stop_reason = reason;
            break;
        }
    }
    Ok(report)
}

fn lowest_index_best(
    values: impl Iterator<Item = f64>,
    better: impl Fn(f64, f64) -> bool,
) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| better(v, b)) {
            best = Some((i, v));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Shares the scheduler's initial phase, then acts greedily on the fitted
/// adapters.
fn run_greedy(
    policy: Policy,
    env: &dyn Environment,
    config: &SchedulerConfig,
) -> Result<RunReport, SchedulerError> {
    if env.num_dims() <= MONEY {
        return Err(SchedulerError::Config(format!(
            "{} needs latency and money dimensions",
            policy.label()
        )));
    }
    let init = run_initial_phase(env, config)?;
    let mut report = empty_report(init.ledger.clone());
    report.lambda = init.lambda;
    report.opt_hat = init.opt_hat;
    report.m_t0 = init.m_t0;
    report.e_r = init.e_r;
    report.e_c = init.e_c;
    if let Some(reason) = init.stop {
        report.stop_reason = reason;
        return Ok(report);
    }
    let c = env.num_dims();
    let budget = if config.charge_initial_phase {
        config.budget.clone()
    } else {
        let totals = (0..c)
            .map(|k| config.budget.get(k) + init.ledger.consumed.get(k))
            .collect();
        BudgetVector::new(totals).map_err(|e| SchedulerError::Config(e.to_string()))?
    };
    let mut model = RoundModel::new(
        &PredictionMode::Fitted,
        init.bank,
        init.actions,
        &init.history,
        config.seed,
        3,
    );
    let caps = config.budget.as_slice().to_vec();
    let start = config.initial_rounds(env.num_actions());
    for (k, t) in (start..config.horizon).enumerate() {
        let preds = model.predict_all(env, t)?;
        let action = match policy {
            Policy::LatencyFirst => {
                lowest_index_best(preds.iter().map(|p| p.1.get(LATENCY)), |v, b| v < b)
            }
            Policy::MoneyFirst => {
                lowest_index_best(preds.iter().map(|p| p.1.get(MONEY)), |v, b| v < b)
            }
            _ => lowest_index_best(
                preds.iter().map(|(r, phi)| {
                    let mean_ratio = phi
                        .as_slice()
                        .iter()
                        .zip(&caps)
                        .map(|(v, cap)| if *cap > 0.0 { v / cap } else { *v })
                        .sum::<f64>()
                        / c as f64;
                    r / mean_ratio.max(1e-300)
                }),
                |v, b| v > b,
            ),
        };
        let record = match crate::scheduler::play(env, &mut report.ledger, Some(&budget), t, action)
        {
            Ok(rec) => rec,
            Err(reason) => {
                report.stop_reason = reason;
                break;
            }
        };
        model.observe(&record)?;
        if (k + 1) % config.refit_every == 0 {
            model.refit();
        }
    }
    Ok(report)
}
