//! Domain types shared by every module: contexts, actions, cost and budget
//! vectors, observation records and the per-run ledger.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Names used for the two constraint dimensions of the trace format.
pub const LATENCY: usize = 0;
pub const MONEY: usize = 1;

/// Human-readable name of a constraint dimension.
pub fn dimension_name(c: usize, num_dims: usize) -> String {
    match (num_dims, c) {
        (2, LATENCY) => "latency".to_string(),
        (2, MONEY) => "money".to_string(),
        _ => format!("dim{c}"),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative entry {value} at index {index} in {what}")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{what}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("ragged matrix: row {row} has {actual} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("context carries neither a pooled embedding nor modality features")]
    EmptyContext,
    #[error("action ids must be dense and unique: position {position} holds id {id}")]
    SparseActionIds { position: usize, id: usize },
}

/// Dense row-major matrix. Serialized as an array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, TypeError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(TypeError::Ragged {
                    row: i,
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = TypeError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// Multi-modal context of one task.
///
/// Carries either raw per-modality token matrices (optionally with the
/// CLS attention rows used for pooling), a precomputed pooled embedding,
/// or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub round_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_features: Option<BTreeMap<String, Matrix>>,
    /// CLS attention rows, one per head, over the stacked modality tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cls_attention: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled_embedding: Option<Vec<f64>>,
}

impl TaskContext {
    pub fn from_embedding(round_index: usize, embedding: Vec<f64>) -> Self {
        Self {
            round_index,
            modality_features: None,
            cls_attention: None,
            pooled_embedding: Some(embedding),
        }
    }

    pub fn from_modalities(
        round_index: usize,
        modalities: BTreeMap<String, Matrix>,
        cls_attention: Option<Matrix>,
    ) -> Self {
        Self {
            round_index,
            modality_features: Some(modalities),
            cls_attention,
            pooled_embedding: None,
        }
    }

    /// Checks finiteness and, when `d_ctx` is given, the pooled dimension.
    pub fn validate(&self, d_ctx: Option<usize>) -> Result<(), TypeError> {
        if self.modality_features.is_none() && self.pooled_embedding.is_none() {
            return Err(TypeError::EmptyContext);
        }
        if let Some(mods) = &self.modality_features {
            if !mods.values().all(Matrix::is_finite) {
                return Err(TypeError::NonFinite("modality features"));
            }
        }
        if let Some(att) = &self.cls_attention {
            if !att.is_finite() {
                return Err(TypeError::NonFinite("cls attention"));
            }
        }
        if let Some(z) = &self.pooled_embedding {
            if !z.iter().all(|v| v.is_finite()) {
                return Err(TypeError::NonFinite("pooled embedding"));
            }
            if let Some(d) = d_ctx {
                if z.len() != d {
                    return Err(TypeError::DimensionMismatch {
                        what: "pooled embedding",
                        expected: d,
                        actual: z.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Copy that keeps only the pooled embedding (for compact histories).
    pub fn pooled_only(&self) -> Option<Self> {
        self.pooled_embedding
            .as_ref()
            .map(|z| Self::from_embedding(self.round_index, z.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub action_id: usize,
    pub label: String,
    pub action_embedding: Vec<f64>,
}

impl ActionSpec {
    /// One action per label, with one-hot embeddings.
    pub fn one_hot_set(labels: &[String]) -> Vec<ActionSpec> {
        let a = labels.len();
        labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let mut e = vec![0.0; a];
                e[i] = 1.0;
                ActionSpec {
                    action_id: i,
                    label: label.clone(),
                    action_embedding: e,
                }
            })
            .collect()
    }

    /// Checks that ids are `0..len` in order and embeddings share a dimension.
    pub fn validate_set(actions: &[ActionSpec]) -> Result<(), TypeError> {
        let d = actions.first().map_or(0, |a| a.action_embedding.len());
        for (pos, a) in actions.iter().enumerate() {
            if a.action_id != pos {
                return Err(TypeError::SparseActionIds {
                    position: pos,
                    id: a.action_id,
                });
            }
            if a.action_embedding.len() != d {
                return Err(TypeError::DimensionMismatch {
                    what: "action embedding",
                    expected: d,
                    actual: a.action_embedding.len(),
                });
            }
            if !a.action_embedding.iter().all(|v| v.is_finite()) {
                return Err(TypeError::NonFinite("action embedding"));
            }
        }
        Ok(())
    }
}

/// Per-round resource consumption, one nonnegative entry per constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(values: Vec<f64>) -> Result<Self, TypeError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(TypeError::NonFinite("cost vector"));
            }
            if value < 0.0 {
                return Err(TypeError::Negative {
                    what: "cost vector",
                    index,
                    value,
                });
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(dims: usize) -> Self {
        Self(vec![0.0; dims])
    }

    /// Clamps negative entries to zero. Non-finite entries become zero.
    pub fn clamped(values: Vec<f64>) -> Self {
        Self(
            values
                .into_iter()
                .map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, c: usize) -> f64 {
        self.0[c]
    }

    fn add_assign(&mut self, other: &CostVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

impl TryFrom<Vec<f64>> for CostVector {
    type Error = TypeError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        CostVector::new(v)
    }
}

impl From<CostVector> for Vec<f64> {
    fn from(c: CostVector) -> Self {
        c.0
    }
}

/// Total budget per constraint dimension.
///
/// Entries must be finite and nonnegative. A zero entry is a budget that
/// admits no positive spend; the scheduler halts before its first round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BudgetVector(Vec<f64>);

impl BudgetVector {
    pub fn new(totals: Vec<f64>) -> Result<Self, TypeError> {
        for (index, &value) in totals.iter().enumerate() {
            if !value.is_finite() {
                return Err(TypeError::NonFinite("budget vector"));
            }
            if value < 0.0 {
                return Err(TypeError::Negative {
                    what: "budget vector",
                    index,
                    value,
                });
            }
        }
        Ok(Self(totals))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, c: usize) -> f64 {
        self.0[c]
    }

    /// First dimension with a zero total, if any.
    pub fn first_zero(&self) -> Option<usize> {
        self.0.iter().position(|&v| v == 0.0)
    }

    /// Smallest total over dimensions.
    pub fn min_total(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖Φ⁻¹‖_∞`, the largest reciprocal total.
    pub fn max_reciprocal(&self) -> f64 {
        self.0.iter().map(|v| 1.0 / v).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for BudgetVector {
    type Error = TypeError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        BudgetVector::new(v)
    }
}

impl From<BudgetVector> for Vec<f64> {
    fn from(b: BudgetVector) -> Self {
        b.0
    }
}

/// One executed round: what was chosen and what was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub reward: f64,
    pub cost: CostVector,
    pub action_id: usize,
    pub context: TaskContext,
}

/// Ground-truth outcome of one action on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub reward: f64,
    pub cost: CostVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Ran all rounds up to the horizon.
    Horizon,
    /// The next round would have pushed this dimension past its budget.
    Budget(usize),
}

impl StopReason {
    pub fn label(&self, num_dims: usize) -> String {
        match self {
            StopReason::Horizon => "horizon".to_string(),
            StopReason::Budget(c) => format!("{}_budget", dimension_name(*c, num_dims)),
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub round: usize,
    pub action_id: usize,
    pub reward: f64,
    pub cost: CostVector,
}

/// Cumulative accounting of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub consumed: CostVector,
    pub rounds_executed: usize,
    pub reward_sum: f64,
    pub decision_log: Vec<Decision>,
}

impl RunLedger {
    pub fn new(num_dims: usize) -> Self {
        Self {
            consumed: CostVector::zeros(num_dims),
            rounds_executed: 0,
            reward_sum: 0.0,
            decision_log: Vec::new(),
        }
    }

    /// Dimension that `cost` would push past `budget`, if any.
    pub fn would_exceed(&self, cost: &CostVector, budget: &BudgetVector) -> Option<usize> {
        (0..self.consumed.len()).find(|&c| self.consumed.get(c) + cost.get(c) > budget.get(c))
    }

    pub fn commit(&mut self, decision: Decision) {
        self.consumed.add_assign(&decision.cost);
        self.reward_sum += decision.reward;
        self.rounds_executed += 1;
        self.decision_log.push(decision);
    }

    /// Mean reward over executed rounds; zero for an empty run.
    pub fn avg_reward(&self) -> f64 {
        if self.rounds_executed == 0 {
            0.0
        } else {
            self.reward_sum / self.rounds_executed as f64
        }
    }

    /// Recomputes the running sums from the log and compares.
    pub fn is_consistent(&self, rel_tol: f64) -> bool {
        if self.rounds_executed != self.decision_log.len() {
            return false;
        }
        (0..self.consumed.len()).all(|c| {
            let sum: f64 = self.decision_log.iter().map(|d| d.cost.get(c)).sum();
            (sum - self.consumed.get(c)).abs() <= rel_tol * sum.abs().max(1.0)
        })
    }

    pub fn within_budget(&self, budget: &BudgetVector) -> bool {
        (0..self.consumed.len()).all(|c| self.consumed.get(c) <= budget.get(c))
    }
}
