//! Fixtures shared by the benchmarks.

use m2cmab::experiment::{
    derive_budget_regimes, generate_synthetic_trace, GeneratorSpec, RegimeName,
};
use m2cmab::{BudgetVector, RoundwiseLp, SchedulerConfig, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random round-wise LP with `rounds × actions` variables and `dims`
/// budget rows, tight enough that the budget rows bind.
pub fn random_lp(rounds: usize, actions: usize, dims: usize, seed: u64) -> RoundwiseLp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = (0..rounds)
        .map(|_| (0..actions).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let costs = (0..rounds)
        .map(|_| {
            (0..actions)
                .map(|_| (0..dims).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect()
        })
        .collect();
    let rhs = vec![0.3 * rounds as f64; dims];
    RoundwiseLp::new(rewards, costs, rhs, true).expect("well-formed LP")
}

pub fn linear_trace(tasks: usize, seed: u64) -> Trace {
    generate_synthetic_trace(&GeneratorSpec::linear(tasks), seed).expect("valid spec")
}

pub fn regime_budget(trace: &Trace, horizon: usize, name: RegimeName) -> BudgetVector {
    derive_budget_regimes(trace, horizon)
        .expect("regimes")
        .into_iter()
        .find(|r| r.name == name)
        .expect("all regimes derived")
        .budget
}

/// Scheduler over the whole trace with a 5% initial phase.
pub fn scheduler_config(trace: &Trace, name: RegimeName, seed: u64) -> SchedulerConfig {
    let horizon = trace.len();
    let t0 = (horizon / (20 * (trace.num_actions() + 1))).max(1);
    SchedulerConfig::new(horizon, t0, regime_budget(trace, horizon, name)).with_seed(seed)
}
