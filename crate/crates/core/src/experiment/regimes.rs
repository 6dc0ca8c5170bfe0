//! Budget levels from order statistics of per-action aggregated cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Environment;
use crate::types::BudgetVector;

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("budget regimes need at least three actions, got {0}")]
    TooFewActions(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Restricted,
    Normal,
    Generous,
}

impl RegimeName {
    pub const ALL: [RegimeName; 3] = [
        RegimeName::Restricted,
        RegimeName::Normal,
        RegimeName::Generous,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RegimeName::Restricted => "restricted",
            RegimeName::Normal => "normal",
            RegimeName::Generous => "generous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRegime {
    pub name: RegimeName,
    pub budget: BudgetVector,
}

/// Per dimension: Restricted is the smallest aggregated action cost,
/// Normal the second smallest and Generous the median.
pub fn regimes_from_totals(totals: &[Vec<f64>]) -> Result<[BudgetRegime; 3], RegimeError> {
    let a = totals.len();
    if a < 3 {
        return Err(RegimeError::TooFewActions(a));
    }
    let c = totals[0].len();
    let mut levels = [vec![0.0; c], vec![0.0; c], vec![0.0; c]];
    for k in 0..c {
        let mut col: Vec<f64> = totals.iter().map(|t| t[k]).collect();
        col.sort_by(f64::total_cmp);
        levels[0][k] = col[0];
        levels[1][k] = col[1];
        levels[2][k] = col[(a - 1) / 2];
    }
    let make = |name, v: &Vec<f64>| BudgetRegime {
        name,
        budget: BudgetVector::new(v.clone()).expect("aggregated costs are nonnegative"),
    };
    Ok([
        make(RegimeName::Restricted, &levels[0]),
        make(RegimeName::Normal, &levels[1]),
        make(RegimeName::Generous, &levels[2]),
    ])
}

/// Regimes from each action's total cost over the first `rounds` tasks.
pub fn derive_budget_regimes(
    env: &dyn Environment,
    rounds: usize,
) -> Result<[BudgetRegime; 3], RegimeError> {
    let a = env.num_actions();
    let c = env.num_dims();
    let n = rounds.min(env.num_tasks());
    let totals: Vec<Vec<f64>> = (0..a)
        .map(|k| {
            let mut sum = vec![0.0; c];
            for t in 0..n {
                for (s, v) in sum.iter_mut().zip(env.outcome(t, k).cost.as_slice()) {
                    *s += v;
                }
            }
            sum
        })
        .collect();
    regimes_from_totals(&totals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn order_statistics() {
        let r = regimes_from_totals(&col(&[30.0, 10.0, 50.0, 20.0, 40.0])).unwrap();
        assert_eq!(r[0].budget.as_slice(), &[10.0]);
        assert_eq!(r[1].budget.as_slice(), &[20.0]);
        assert_eq!(r[2].budget.as_slice(), &[30.0]);

        let r = regimes_from_totals(&col(&[5.0, 5.0, 7.0, 9.0, 11.0])).unwrap();
        assert_eq!(r[0].budget.as_slice(), &[5.0]);
        assert_eq!(r[1].budget.as_slice(), &[5.0]);
        assert_eq!(r[2].budget.as_slice(), &[7.0]);
    }

    #[test]
    fn identical_actions_collapse() {
        let r = regimes_from_totals(&col(&[4.0; 5])).unwrap();
        assert!(r.iter().all(|x| x.budget.as_slice() == [4.0]));
    }

    #[test]
    fn needs_three_actions() {
        assert_eq!(
            regimes_from_totals(&col(&[1.0, 2.0])).unwrap_err(),
            RegimeError::TooFewActions(2)
        );
    }
}
