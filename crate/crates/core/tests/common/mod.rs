#![allow(dead_code)]
pub mod oracles;

use m2cmab::embed::PoolingConfig;
use m2cmab::{CostVector, Outcome, TaskContext, TaskRecord, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trace whose contexts are uniform in `[0,1]^d` and whose outcomes come
/// from `f(t, a, x)`.
pub fn table_trace(
    rows: usize,
    actions: usize,
    d: usize,
    seed: u64,
    f: impl Fn(usize, usize, &[f64]) -> (f64, Vec<f64>),
) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..rows)
        .map(|t| {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let outcomes = (0..actions)
                .map(|a| {
                    let (reward, cost) = f(t, a, &x);
                    Outcome {
                        reward,
                        cost: CostVector::new(cost).unwrap(),
                    }
                })
                .collect();
            TaskRecord {
                context: TaskContext::from_embedding(t, x),
                outcomes,
                expected: None,
            }
        })
        .collect();
    Trace::new(tasks, PoolingConfig::default()).unwrap()
}

/// Every action costs `cost` in each of `dims` dimensions; rewards differ.
pub fn flat_cost_trace(rows: usize, actions: usize, dims: usize, cost: f64) -> Trace {
    table_trace(rows, actions, 3, 11, |_, a, x| {
        (1.0 + a as f64 + x[0], vec![cost; dims])
    })
}
