//! Synthetic traces, baselines, budget regimes and the experiment matrix.

pub mod costs;
pub mod matrix;
pub mod policies;
pub mod regimes;
pub mod rewards;
pub mod tracegen;

pub use costs::{cloud_cost, local_cost, local_latency, CloudRates, CostModelError};
pub use matrix::{
    run_matrix, run_matrix_with, Aggregate, CellKey, CellMetrics, CellResult, Dataset,
    ExperimentReport, MatrixError, MatrixSpec, SchedulerTemplate,
};
pub use policies::{run_baseline, PlugInPolicy, Policy};
pub use regimes::{
    derive_budget_regimes, regimes_from_totals, BudgetRegime, RegimeError, RegimeName,
};
pub use rewards::{exact_match_reward, rouge_to_reward, RougeOutOfRange};
pub use tracegen::{
    generate_synthetic_trace, BackendProfile, GeneratorError, GeneratorSpec, TraceMode,
};
