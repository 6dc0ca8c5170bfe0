//! The two-phase scheduling policy.
//!
//! The initial phase plays every action `T0` times in shuffled blocks, then
//! `T0` uniformly random actions, fits the adapters and solves a round-wise
//! LP over the second stage to size the dual radius `Λ`. The
//! exploration-exploitation phase scores actions by their predicted
//! Lagrangian, samples by inverse-gap weighting and updates the multipliers
//! by mirror descent on the realized cost.

mod initial;
mod model;
mod online;
mod report;
mod sampling;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constrainer::{ConstrainerError, StepSize};
use crate::embed::{context_embedding, PoolingConfig};
use crate::lp::LpError;
use crate::predictor::{FeatureMap, PredictError, PredictorConfig};
use crate::trace::Environment;
use crate::types::{ActionSpec, BudgetVector, ObservationRecord, RunLedger, StopReason};

pub use initial::{lambda_radius, m_t0, run_initial_phase, InitialPhaseResult};
pub use model::{PredictionMode, RoundModel};
pub use online::{run_exploration_exploitation, run_full};
pub use report::{write_dual_csv, write_rounds_csv, RoundDiagnostics, RunReport, RunSummary};
pub use sampling::{argmax, sampling_distribution, ActionDistribution};

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("environment has {available} tasks but {needed} are required")]
    Exhausted { needed: usize, available: usize },
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Constrainer(#[from] ConstrainerError),
}

/// Which quantity plays the role of `Φ_min` in `Λ = (T/Φ_min)(OPT̂ + M)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMinMode {
    /// `1`: the budget after normalizing every dimension by its total.
    #[default]
    Normalized,
    /// `min_c Φ_c` in raw units.
    MinBudget,
    /// `‖Φ⁻¹‖∞`.
    Literal,
}

impl PhiMinMode {
    pub fn value(self, budget: &BudgetVector) -> f64 {
        match self {
            PhiMinMode::Normalized => 1.0,
            PhiMinMode::MinBudget => budget.min_total(),
            PhiMinMode::Literal => budget.max_reciprocal(),
        }
    }
}

/// Cost vector fed to the dual gradient after each round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSource {
    #[default]
    Realized,
    Predicted,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn scheduler_predictor() -> PredictorConfig {
    PredictorConfig {
        feature_map: FeatureMap::Interaction,
        ..PredictorConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Total rounds `T`, initial phase included.
    pub horizon: usize,
    /// Plays per action in the first initial stage.
    pub t0: usize,
    /// Exploitation strength of inverse-gap weighting; `√(A·T_ee)` if unset.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub refit_every: usize,
    pub budget: BudgetVector,
    #[serde(default)]
    pub phi_min: PhiMinMode,
    /// Mirror-descent step; derived from the gradient bound if unset.
    #[serde(default)]
    pub step_size: Option<StepSize>,
    /// Bound `G` on the dual gradient; estimated from initial-phase costs if
    /// unset.
    #[serde(default)]
    pub gradient_bound: Option<f64>,
    #[serde(default)]
    pub gradient_source: GradientSource,
    #[serde(default = "yes")]
    pub charge_initial_phase: bool,
    #[serde(default)]
    pub reanchor_prior: bool,
    #[serde(default = "scheduler_predictor")]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub prediction: PredictionMode,
    /// Keep per-round diagnostics in the report.
    #[serde(default)]
    pub record_rounds: bool,
    /// Write the initial-phase LP instance here.
    #[serde(default)]
    pub lp_dump: Option<PathBuf>,
}

impl SchedulerConfig {
    pub fn new(horizon: usize, t0: usize, budget: BudgetVector) -> Self {
        Self {
            horizon,
            t0,
            rho: None,
            seed: 0,
            refit_every: 1,
            budget,
            phi_min: PhiMinMode::default(),
            step_size: None,
            gradient_bound: None,
            gradient_source: GradientSource::default(),
            charge_initial_phase: true,
            reanchor_prior: false,
            predictor: scheduler_predictor(),
            prediction: PredictionMode::default(),
            record_rounds: false,
            lp_dump: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn initial_rounds(&self, num_actions: usize) -> usize {
        (num_actions + 1) * self.t0
    }

    /// Rounds left for exploration-exploitation.
    pub fn t_ee(&self, num_actions: usize) -> usize {
        self.horizon
            .saturating_sub(self.initial_rounds(num_actions))
    }

    pub fn rho_for(&self, num_actions: usize) -> f64 {
        self.rho
            .unwrap_or_else(|| ((num_actions * self.t_ee(num_actions)) as f64).sqrt())
    }

    pub fn validate(&self, env: &dyn Environment) -> Result<(), SchedulerError> {
        let a = env.num_actions();
        let bad = |m: String| Err(SchedulerError::Config(m));
        if a < 2 {
            return bad(format!("at least two actions are required, got {a}"));
        }
        if self.t0 == 0 {
            return bad("t0 must be positive".into());
        }
        if self.initial_rounds(a) >= self.horizon {
            return bad(format!(
                "(A+1)·T0 = {} must be below the horizon {}",
                self.initial_rounds(a),
                self.horizon
            ));
        }
        if self.refit_every == 0 {
            return bad("refit_every must be positive".into());
        }
        if self.budget.len() != env.num_dims() {
            return bad(format!(
                "budget has {} dimensions, environment has {}",
                self.budget.len(),
                env.num_dims()
            ));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return bad(format!("rho must be positive, got {rho}"));
            }
        }
        if let Some(g) = self.gradient_bound {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gradient_bound must be positive, got {g}"));
            }
        }
        if let PredictionMode::Ablated { cost_dims, .. } = &self.prediction {
            if let Some(c) = cost_dims.iter().find(|&&c| c >= env.num_dims()) {
                return bad(format!("ablated cost dimension {c} out of range"));
            }
        }
        if env.num_tasks() < self.horizon {
            return Err(SchedulerError::Exhausted {
                needed: self.horizon,
                available: env.num_tasks(),
            });
        }
        Ok(())
    }
}

/// One-hot action set labelled by index.
pub fn default_actions(num_actions: usize) -> Vec<ActionSpec> {
    let labels: Vec<String> = (0..num_actions).map(|a| format!("action_{a}")).collect();
    ActionSpec::one_hot_set(&labels)
}

pub(crate) fn context_dim(env: &dyn Environment) -> Result<usize, SchedulerError> {
    Ok(context_embedding(env.context(0), PoolingConfig::default())
        .map_err(PredictError::from)?
        .len())
}

/// Executes action `a` on task `t` under hard-stop semantics: the round is
/// committed only if every dimension stays within `budget`.
pub(crate) fn play(
    env: &dyn Environment,
    ledger: &mut RunLedger,
    budget: Option<&BudgetVector>,
    t: usize,
    a: usize,
) -> Result<ObservationRecord, StopReason> {
    let outcome = env.outcome(t, a);
    if let Some(budget) = budget {
        if let Some(c) = ledger.would_exceed(&outcome.cost, budget) {
            log::debug!("round {t}: action {a} would exceed budget dimension {c}; stopping");
            return Err(StopReason::Budget(c));
        }
    }
    ledger.commit(crate::types::Decision {
        round: t,
        action_id: a,
        reward: outcome.reward,
        cost: outcome.cost.clone(),
    });
    let ctx = env.context(t);
    Ok(ObservationRecord {
        reward: outcome.reward,
        cost: outcome.cost.clone(),
        action_id: a,
        context: ctx.pooled_only().unwrap_or_else(|| ctx.clone()),
    })
}
