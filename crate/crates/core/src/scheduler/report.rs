use std::path::Path;

use serde::{Deserialize, Serialize};

use super::initial::InitialPhaseResult;
use super::SchedulerConfig;
use crate::constrainer::DualState;
use crate::types::{dimension_name, RunLedger, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub action: usize,
    pub reward: f64,
    pub cost: Vec<f64>,
    pub lambda: Vec<f64>,
    pub slack: f64,
    pub score_max: f64,
}

/// Result of one scheduler run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub ledger: RunLedger,
    pub stop_reason: StopReason,
    pub lambda: f64,
    pub opt_hat: f64,
    pub m_t0: f64,
    pub e_r: f64,
    pub e_c: f64,
    pub rounds: Vec<RoundDiagnostics>,
    pub final_dual: Option<DualState>,
}

impl RunReport {
    pub(crate) fn from_initial(init: &InitialPhaseResult) -> Self {
        Self {
            ledger: init.ledger.clone(),
            stop_reason: init.stop.unwrap_or(StopReason::Horizon),
            lambda: init.lambda,
            opt_hat: init.opt_hat,
            m_t0: init.m_t0,
            e_r: init.e_r,
            e_c: init.e_c,
            rounds: Vec::new(),
            final_dual: None,
        }
    }

    pub fn summary(&self, config: &SchedulerConfig) -> RunSummary {
        let dims = self.ledger.consumed.len();
        RunSummary {
            config: config.clone(),
            lambda: self.lambda,
            opt_hat: self.opt_hat,
            m_t0: self.m_t0,
            rounds_executed: self.ledger.rounds_executed,
            avg_reward: self.ledger.avg_reward(),
            consumed: self.ledger.consumed.as_slice().to_vec(),
            stop_reason: self.stop_reason.label(dims),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SchedulerConfig,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub opt_hat: f64,
    #[serde(rename = "M_T0")]
    pub m_t0: f64,
    pub rounds_executed: usize,
    pub avg_reward: f64,
    pub consumed: Vec<f64>,
    pub stop_reason: String,
}

fn cost_headers(prefix: &str, dims: usize) -> Vec<String> {
    (1..=dims).map(|c| format!("{prefix}_{c}")).collect()
}

/// `round, action, reward, cost_1..cost_C, lambda_1..lambda_C, score_max`.
pub fn write_rounds_csv(path: &Path, rounds: &[RoundDiagnostics], dims: usize) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["round".to_string(), "action".into(), "reward".into()];
    header.extend(cost_headers("cost", dims));
    header.extend(cost_headers("lambda", dims));
    header.push("score_max".into());
    w.write_record(&header)?;
    for r in rounds {
        let mut row = vec![
            r.round.to_string(),
            r.action.to_string(),
            r.reward.to_string(),
        ];
        row.extend(r.cost.iter().map(f64::to_string));
        row.extend(r.lambda.iter().map(f64::to_string));
        row.push(r.score_max.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `round, lambda_<dim>.., slack`.
pub fn write_dual_csv(path: &Path, rounds: &[RoundDiagnostics], dims: usize) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["round".to_string()];
    header.extend((0..dims).map(|c| format!("lambda_{}", dimension_name(c, dims))));
    header.push("slack".into());
    w.write_record(&header)?;
    for r in rounds {
        let mut row = vec![r.round.to_string()];
        row.extend(r.lambda.iter().map(f64::to_string));
        row.push(r.slack.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
