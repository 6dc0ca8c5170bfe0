//! Round-wise linear programs: the benchmark value estimated in the initial
//! phase and the hindsight comparator used for regret.

mod simplex;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Environment;
use crate::types::BudgetVector;

pub use simplex::{maximize, Constraint, DenseLp, Sense, SimplexOutcome};

/// Above this many variables `hindsight_opt` switches to the dual
/// cutting-plane method.
const DENSE_LIMIT: usize = 3000;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("simplex hit its iteration limit")]
    IterationLimit,
    #[error("simplex reported an unbounded problem")]
    Unbounded,
    #[error("dump failed: {0}")]
    Dump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

/// `max ΣΣ o[t][a]·r[t][a]` subject to `ΣΣ o[t][a]·c[t][a][k] ≤ rhs[k]` for
/// every dimension `k`, with each row of `o` in the probability simplex
/// (or the sub-simplex when `allow_skip` is set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundwiseLp {
    pub rewards: Vec<Vec<f64>>,
    pub costs: Vec<Vec<Vec<f64>>>,
    pub rhs: Vec<f64>,
    pub allow_skip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub distribution: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub status: LpStatus,
}

impl LpSolution {
    /// Total probability mass left on the skip option.
    pub fn skip_mass(&self) -> f64 {
        self.distribution
            .iter()
            .map(|row| (1.0 - row.iter().sum::<f64>()).max(0.0))
            .sum()
    }
}

impl RoundwiseLp {
    pub fn new(
        rewards: Vec<Vec<f64>>,
        costs: Vec<Vec<Vec<f64>>>,
        rhs: Vec<f64>,
        allow_skip: bool,
    ) -> Result<Self, LpError> {
        let lp = Self {
            rewards,
            costs,
            rhs,
            allow_skip,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn rounds(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    pub fn num_dims(&self) -> usize {
        self.rhs.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let a = self.num_actions();
        let c = self.num_dims();
        if self.costs.len() != self.rounds() {
            return Err(LpError::Shape(format!(
                "{} reward rows but {} cost rows",
                self.rounds(),
                self.costs.len()
            )));
        }
        for (t, (r, cs)) in self.rewards.iter().zip(&self.costs).enumerate() {
            if r.len() != a || cs.len() != a {
                return Err(LpError::Shape(format!(
                    "round {t} has ragged action entries"
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite("rewards"));
            }
            for phi in cs {
                if phi.len() != c {
                    return Err(LpError::Shape(format!(
                        "round {t} cost length {} != {c}",
                        phi.len()
                    )));
                }
                if phi.iter().any(|v| !v.is_finite()) {
                    return Err(LpError::NonFinite("costs"));
                }
            }
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("rhs"));
        }
        Ok(())
    }

    fn to_dense(&self) -> DenseLp {
        let (t_rows, a, c) = (self.rounds(), self.num_actions(), self.num_dims());
        let n = t_rows * a;
        let objective: Vec<f64> = self.rewards.iter().flatten().copied().collect();
        let mut constraints = Vec::with_capacity(c + t_rows);
        for k in 0..c {
            // Rows are scaled by their right-hand side to keep the tableau
            // well conditioned.
            let scale = if self.rhs[k] > 0.0 {
                1.0 / self.rhs[k]
            } else {
                1.0
            };
            let coeffs: Vec<f64> = self
                .costs
                .iter()
                .flat_map(|round| round.iter().map(move |phi| phi[k] * scale))
                .collect();
            constraints.push(Constraint::new(coeffs, Sense::Le, self.rhs[k] * scale));
        }
        let sense = if self.allow_skip {
            Sense::Le
        } else {
            Sense::Eq
        };
        for t in 0..t_rows {
            let mut coeffs = vec![0.0; n];
            coeffs[t * a..(t + 1) * a].fill(1.0);
            constraints.push(Constraint::new(coeffs, sense, 1.0));
        }
        DenseLp {
            objective,
            constraints,
        }
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.validate()?;
        let (t_rows, a) = (self.rounds(), self.num_actions());
        if t_rows == 0 || a == 0 {
            return Ok(LpSolution {
                distribution: vec![vec![]; t_rows],
                objective_value: 0.0,
                status: LpStatus::Optimal,
            });
        }
        match maximize(&self.to_dense()) {
            SimplexOutcome::Optimal { x, .. } => {
                let distribution: Vec<Vec<f64>> = x
                    .chunks(a)
                    .map(|row| {
                        let mut row: Vec<f64> = row.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                        let s: f64 = row.iter().sum();
                        if s > 1.0 {
                            row.iter_mut().for_each(|v| *v /= s);
                        }
                        row
                    })
                    .collect();
                let objective_value = distribution
                    .iter()
                    .zip(&self.rewards)
                    .map(|(o, r)| o.iter().zip(r).map(|(x, y)| x * y).sum::<f64>())
                    .sum();
                let sol = LpSolution {
                    distribution,
                    objective_value,
                    status: LpStatus::Optimal,
                };
                if self.allow_skip {
                    let skip = sol.skip_mass();
                    if skip > 1e-9 {
                        log::debug!("round-wise LP left {skip:.3e} mass on skip");
                    }
                }
                Ok(sol)
            }
            SimplexOutcome::Infeasible => Ok(LpSolution {
                distribution: vec![vec![0.0; a]; t_rows],
                objective_value: 0.0,
                status: LpStatus::Infeasible,
            }),
            SimplexOutcome::Unbounded => Err(LpError::Unbounded),
            SimplexOutcome::IterationLimit => Err(LpError::IterationLimit),
        }
    }

    /// Writes the instance as JSON for offline inspection.
    pub fn dump_json(&self, path: &Path) -> Result<(), LpError> {
        let text = serde_json::to_string(self).map_err(|e| LpError::Dump(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| LpError::Dump(e.to_string()))
    }

    /// Optimal value of a skip-allowed instance via its Lagrangian dual,
    /// `min_{μ≥0} Σ_t max(0, max_a r − ⟨μ, c⟩) + ⟨μ, rhs⟩`, minimized with
    /// Kelley's cutting-plane method. Exact at convergence because the dual
    /// is polyhedral. Only the value is produced.
    pub fn dual_value(&self) -> Result<f64, LpError> {
        self.validate()?;
        if !self.allow_skip || self.rhs.iter().any(|&v| v < 0.0) {
            return Err(LpError::Shape(
                "dual method needs allow_skip and nonnegative rhs".into(),
            ));
        }
        let c = self.num_dims();
        // A zero right-hand side forbids any action with positive cost there.
        let zero_dims: Vec<usize> = (0..c).filter(|&k| self.rhs[k] == 0.0).collect();
        let allowed = |phi: &[f64]| zero_dims.iter().all(|&k| phi[k] <= 0.0);
        let dims: Vec<usize> = (0..c).filter(|&k| self.rhs[k] > 0.0).collect();

        // Evaluates g(μ) and returns the cut (R, C) of the maximizing choice.
        let eval = |mu: &[f64]| -> (f64, f64, Vec<f64>) {
            let mut total = 0.0;
            let mut r_sum = 0.0;
            let mut c_sum = vec![0.0; dims.len()];
            for (r, cs) in self.rewards.iter().zip(&self.costs) {
                let mut best: Option<(usize, f64)> = None;
                for (a, phi) in cs.iter().enumerate() {
                    if !allowed(phi) {
                        continue;
                    }
                    let v = r[a] - dims.iter().zip(mu).map(|(&k, m)| m * phi[k]).sum::<f64>();
                    if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                        best = Some((a, v));
                    }
                }
                if let Some((a, v)) = best {
                    total += v;
                    r_sum += r[a];
                    for (s, &k) in c_sum.iter_mut().zip(&dims) {
                        *s += cs[a][k];
                    }
                }
            }
            total += dims
                .iter()
                .zip(mu)
                .map(|(&k, m)| m * self.rhs[k])
                .sum::<f64>();
            (total, r_sum, c_sum)
        };

        let d = dims.len();
        let (g0, r0, c0) = eval(&vec![0.0; d]);
        if d == 0 || g0 <= 0.0 {
            return Ok(g0.max(0.0));
        }
        let upper_mu: Vec<f64> = dims.iter().map(|&k| g0 / self.rhs[k]).collect();
        let mut cuts = vec![(r0, c0)];
        let mut best = g0;
        for _ in 0..2000 {
            // Master: max −z s.t. z − Σ (rhs − C)·μ ≥ R, μ ≤ U; vars (μ, z).
            let mut constraints = Vec::with_capacity(cuts.len() + d);
            for (r, cc) in &cuts {
                let mut coeffs: Vec<f64> = dims
                    .iter()
                    .zip(cc)
                    .map(|(&k, ck)| -(self.rhs[k] - ck))
                    .collect();
                coeffs.push(1.0);
                constraints.push(Constraint::new(coeffs, Sense::Ge, *r));
            }
            for (i, u) in upper_mu.iter().enumerate() {
                let mut coeffs = vec![0.0; d + 1];
                coeffs[i] = 1.0;
                constraints.push(Constraint::new(coeffs, Sense::Le, *u));
            }
            let mut objective = vec![0.0; d + 1];
            objective[d] = -1.0;
            let (x, lower) = match maximize(&DenseLp {
                objective,
                constraints,
            }) {
                SimplexOutcome::Optimal { x, value } => (x, -value),
                SimplexOutcome::IterationLimit => return Err(LpError::IterationLimit),
                _ => return Err(LpError::Unbounded),
            };
            let mu = &x[..d];
            let (g, r, cc) = eval(mu);
            best = best.min(g);
            if best - lower <= 1e-10 * best.abs().max(1.0) {
                return Ok(best);
            }
            cuts.push((r, cc));
        }
        log::warn!("dual cutting plane stopped at its iteration limit");
        Ok(best)
    }
}

/// Total expected reward of the best fractional policy in hindsight over the
/// first `horizon` tasks, subject to the full budgets. Uses each task's
/// expected outcomes (the realized ones when a trace records none).
pub fn hindsight_opt(
    env: &dyn Environment,
    budget: &BudgetVector,
    horizon: usize,
) -> Result<f64, LpError> {
    let t_rows = horizon.min(env.num_tasks());
    let a = env.num_actions();
    let mut rewards = Vec::with_capacity(t_rows);
    let mut costs = Vec::with_capacity(t_rows);
    for t in 0..t_rows {
        let outcomes: Vec<_> = (0..a).map(|k| env.expected(t, k)).collect();
        rewards.push(outcomes.iter().map(|o| o.reward).collect());
        costs.push(
            outcomes
                .iter()
                .map(|o| o.cost.as_slice().to_vec())
                .collect(),
        );
    }
    let lp = RoundwiseLp::new(rewards, costs, budget.as_slice().to_vec(), true)?;
    if t_rows * a > DENSE_LIMIT {
        lp.dual_value()
    } else {
        let sol = lp.solve()?;
        Ok(match sol.status {
            LpStatus::Optimal => sol.objective_value,
            LpStatus::Infeasible => 0.0,
        })
    }
}
