//! Online scheduling of inference tasks across heterogeneous backends under
//! several long-term budgets, as a contextual bandit with knapsacks.
//!
//! The scheduler runs in two phases. An initial phase plays every backend a
//! fixed number of times, fits ridge adapters for reward and per-dimension
//! cost, and estimates the radius of the dual feasible set from a linear
//! program. The exploration-exploitation phase then scores each backend by
//! its predicted per-round Lagrangian, samples with inverse-gap weighting,
//! and updates the budget multipliers by exponentiated-gradient mirror
//! descent.

pub mod constrainer;
pub mod embed;
pub mod experiment;
mod linalg;
pub mod lp;
pub mod predictor;
pub mod scheduler;
pub mod trace;
pub mod types;

pub use constrainer::{DualState, StepSize};
pub use embed::{joint_feature, AttentionBundle, PoolingConfig};
pub use lp::{hindsight_opt, LpSolution, LpStatus, RoundwiseLp};
pub use predictor::{AdapterModel, FeatureMap, PredictorBank, PredictorConfig};
pub use scheduler::{
    run_full, PhiMinMode, PredictionMode, RunReport, SchedulerConfig, SchedulerError,
};
pub use trace::{Environment, TaskRecord, Trace};
pub use types::{
    ActionSpec, BudgetVector, CostVector, Decision, ObservationRecord, Outcome, RunLedger,
    StopReason, TaskContext,
};
