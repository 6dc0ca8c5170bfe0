//! Budget multipliers maintained by online mirror descent over
//! `{λ ≥ 0, ‖λ‖₁ ≤ Λ}`.
//!
//! The ℓ1-ball is represented as a scaled simplex with one extra slack
//! coordinate, so the negative-entropy mirror step is a closed-form
//! exponentiated-gradient update followed by renormalization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BudgetVector, CostVector};

#[derive(Debug, Error, PartialEq)]
pub enum ConstrainerError {
    #[error("dual radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("budget dimension {0} is zero")]
    ZeroBudget(usize),
    #[error("state violates the lifted-simplex invariant")]
    Infeasible,
}

/// Step-size schedule `ϱ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StepSize {
    Constant(f64),
    /// `ϱ_t = base / √t` for rounds counted from 1.
    InverseSqrt(f64),
}

impl StepSize {
    pub fn at(&self, round: usize) -> f64 {
        match *self {
            StepSize::Constant(v) => v,
            StepSize::InverseSqrt(base) => base / (round.max(1) as f64).sqrt(),
        }
    }

    /// `√(ln(C+1)/T_ee) / G` for a gradient bound `G`.
    pub fn default_constant(num_dims: usize, t_ee: usize, grad_bound: f64) -> StepSize {
        let t = t_ee.max(1) as f64;
        StepSize::Constant(((num_dims as f64 + 1.0).ln() / t).sqrt() / grad_bound)
    }

    fn validate(&self) -> Result<(), ConstrainerError> {
        let v = match *self {
            StepSize::Constant(v) | StepSize::InverseSqrt(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ConstrainerError::BadStep(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub slack: f64,
    pub radius: f64,
    pub step: StepSize,
}

impl DualState {
    /// Interior starting point: `λ_c = Λ/(2C)`, slack `Λ/2`.
    pub fn new(num_dims: usize, radius: f64, step: StepSize) -> Result<Self, ConstrainerError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ConstrainerError::BadRadius(radius));
        }
        step.validate()?;
        let c = num_dims.max(1) as f64;
        Ok(Self {
            lambda: vec![radius / (2.0 * c); num_dims],
            slack: radius / 2.0,
            radius,
            step,
        })
    }

    pub fn from_parts(
        lambda: Vec<f64>,
        slack: f64,
        radius: f64,
        step: StepSize,
    ) -> Result<Self, ConstrainerError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ConstrainerError::BadRadius(radius));
        }
        step.validate()?;
        let s = Self {
            lambda,
            slack,
            radius,
            step,
        };
        if !s.is_feasible(1e-9) {
            return Err(ConstrainerError::Infeasible);
        }
        Ok(s)
    }

    pub fn num_dims(&self) -> usize {
        self.lambda.len()
    }

    pub fn l1(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Nonnegativity plus `‖λ‖₁ + slack = Λ` within `tol` relative.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.lambda.iter().all(|&v| v >= 0.0 && v.is_finite())
            && self.slack >= 0.0
            && (self.l1() + self.slack - self.radius).abs() <= tol * self.radius
            && self.l1() <= self.radius * (1.0 + tol)
    }
}

/// `g_c = −(φ_c/Φ_c − 1/T)`.
pub fn dual_gradient(
    chosen_cost: &CostVector,
    budget: &BudgetVector,
    horizon: usize,
) -> Result<Vec<f64>, ConstrainerError> {
    if chosen_cost.len() != budget.len() {
        return Err(ConstrainerError::DimensionMismatch {
            expected: budget.len(),
            actual: chosen_cost.len(),
        });
    }
    let inv_t = 1.0 / horizon as f64;
    chosen_cost
        .as_slice()
        .iter()
        .zip(budget.as_slice())
        .enumerate()
        .map(|(c, (phi, cap))| {
            if *cap > 0.0 {
                Ok(-(phi / cap - inv_t))
            } else {
                Err(ConstrainerError::ZeroBudget(c))
            }
        })
        .collect()
}

/// One exponentiated-gradient step on the lifted simplex:
/// `λ_c ← λ_c·exp(−ϱ_t g_c)`, slack unchanged, then rescale to radius `Λ`.
pub fn omd_step(
    state: &DualState,
    gradient: &[f64],
    round: usize,
) -> Result<DualState, ConstrainerError> {
    if gradient.len() != state.num_dims() {
        return Err(ConstrainerError::DimensionMismatch {
            expected: state.num_dims(),
            actual: gradient.len(),
        });
    }
    let eta = state.step.at(round);
    let log_lambda: Vec<f64> = state
        .lambda
        .iter()
        .zip(gradient)
        .map(|(l, g)| {
            if *l > 0.0 {
                l.ln() - eta * g
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let log_slack = if state.slack > 0.0 {
        state.slack.ln()
    } else {
        f64::NEG_INFINITY
    };
    let top = log_lambda.iter().copied().fold(log_slack, f64::max);
    let lambda: Vec<f64> = log_lambda.iter().map(|v| (v - top).exp()).collect();
    let slack = (log_slack - top).exp();
    let total = lambda.iter().sum::<f64>() + slack;
    let scale = state.radius / total;
    Ok(DualState {
        lambda: lambda.into_iter().map(|v| v * scale).collect(),
        slack: slack * scale,
        radius: state.radius,
        step: state.step,
    })
}

/// `S = r̂ − ⟨φ̂/Φ − 1/T, λ⟩`.
pub fn lagrangian_score(
    pred_reward: f64,
    pred_cost: &CostVector,
    state: &DualState,
    budget: &BudgetVector,
    horizon: usize,
) -> f64 {
    let inv_t = 1.0 / horizon as f64;
    let penalty: f64 = pred_cost
        .as_slice()
        .iter()
        .zip(budget.as_slice())
        .zip(&state.lambda)
        .map(|((phi, cap), l)| {
            let ratio = if *cap > 0.0 { phi / cap } else { 0.0 };
            l * (ratio - inv_t)
        })
        .sum();
    pred_reward - penalty
}
