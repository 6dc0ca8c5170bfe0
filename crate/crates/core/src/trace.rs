//! JSON-lines trace files and the replay environment built from them.
//!
//! One object per task:
//!
//! ```json
//! {"context": {"embedding": [0.1, 0.2]},
//!  "actions": [{"action_id": 0, "reward": 4.0, "latency": 1.2, "money": 0.003}, ...]}
//! ```
//!
//! `context` holds either `embedding` or `modalities` (tag → token matrix),
//! optionally with `cls_attention` rows. Each action entry may carry an
//! `expected` object with the noise-free means; synthetic traces write it
//! so that hindsight benchmarks can use conditional means.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{self, EmbedError, PoolingConfig};
use crate::types::{CostVector, Matrix, Outcome, TaskContext, TypeError};

/// Constraint dimensions carried by the trace format: latency, money.
pub const TRACE_DIMS: usize = 2;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: malformed field: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing entry for action {action}")]
    MissingAction { line: usize, action: usize },
    #[error("line {line}: negative {field} {value} for action {action}")]
    NegativeCost {
        line: usize,
        action: usize,
        field: &'static str,
        value: f64,
    },
    #[error("line {line}: {source}")]
    Embed { line: usize, source: EmbedError },
    #[error("trace is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modalities: Option<BTreeMap<String, Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cls_attention: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowExpected {
    pub reward: f64,
    pub latency: f64,
    pub money: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowAction {
    pub action_id: usize,
    pub reward: f64,
    pub latency: f64,
    pub money: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<RowExpected>,
}

/// Raw trace row as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub context: RowContext,
    pub actions: Vec<RowAction>,
}

/// One validated task: its context and the per-action ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub context: TaskContext,
    pub outcomes: Vec<Outcome>,
    /// Noise-free means, when the trace provides them.
    pub expected: Option<Vec<Outcome>>,
}

fn malformed(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        message: message.into(),
    }
}

fn checked_cost(
    line: usize,
    action: usize,
    latency: f64,
    money: f64,
) -> Result<CostVector, TraceError> {
    for (field, value) in [("latency", latency), ("money", money)] {
        if !value.is_finite() {
            return Err(malformed(
                line,
                format!("non-finite {field} for action {action}"),
            ));
        }
        if value < 0.0 {
            return Err(TraceError::NegativeCost {
                line,
                action,
                field,
                value,
            });
        }
    }
    Ok(CostVector::new(vec![latency, money]).expect("checked above"))
}

fn to_matrix(line: usize, rows: Vec<Vec<f64>>) -> Result<Matrix, TraceError> {
    Matrix::from_rows(rows).map_err(|e: TypeError| malformed(line, e.to_string()))
}

/// Parses and validates one raw row for a trace with `num_actions` actions.
/// `line` is the zero-based row index and becomes the context's round index.
pub fn validate_trace_row(
    raw: &serde_json::Value,
    num_actions: usize,
    line: usize,
) -> Result<TaskRecord, TraceError> {
    let row: TraceRow =
        serde_json::from_value(raw.clone()).map_err(|e| malformed(line, e.to_string()))?;
    row_to_record(row, num_actions, line)
}

fn row_to_record(row: TraceRow, num_actions: usize, line: usize) -> Result<TaskRecord, TraceError> {
    let mut slots: Vec<Option<RowAction>> = vec![None; num_actions];
    for entry in row.actions {
        let id = entry.action_id;
        if id >= num_actions {
            return Err(malformed(
                line,
                format!("action_id {id} out of range for {num_actions} actions"),
            ));
        }
        if slots[id].is_some() {
            return Err(malformed(line, format!("duplicate entry for action {id}")));
        }
        slots[id] = Some(entry);
    }

    let mut outcomes = Vec::with_capacity(num_actions);
    let mut expected = Vec::with_capacity(num_actions);
    let mut all_expected = true;
    for (action, slot) in slots.into_iter().enumerate() {
        let entry = slot.ok_or(TraceError::MissingAction { line, action })?;
        if !entry.reward.is_finite() {
            return Err(malformed(
                line,
                format!("non-finite reward for action {action}"),
            ));
        }
        let cost = checked_cost(line, action, entry.latency, entry.money)?;
        outcomes.push(Outcome {
            reward: entry.reward,
            cost,
        });
        match entry.expected {
            Some(e) => {
                if !e.reward.is_finite() {
                    return Err(malformed(line, "non-finite expected reward"));
                }
                expected.push(Outcome {
                    reward: e.reward,
                    cost: checked_cost(line, action, e.latency, e.money)?,
                });
            }
            None => all_expected = false,
        }
    }

    let ctx = row.context;
    let context = match (ctx.embedding, ctx.modalities) {
        (Some(z), mods) => {
            let mut c = TaskContext::from_embedding(line, z);
            if let Some(m) = mods {
                c.modality_features = Some(
                    m.into_iter()
                        .map(|(k, v)| Ok((k, to_matrix(line, v)?)))
                        .collect::<Result<_, TraceError>>()?,
                );
            }
            c
        }
        (None, Some(m)) => {
            let mods = m
                .into_iter()
                .map(|(k, v)| Ok((k, to_matrix(line, v)?)))
                .collect::<Result<BTreeMap<_, _>, TraceError>>()?;
            let att = ctx.cls_attention.map(|a| to_matrix(line, a)).transpose()?;
            TaskContext::from_modalities(line, mods, att)
        }
        (None, None) => return Err(malformed(line, "context needs `embedding` or `modalities`")),
    };
    context
        .validate(None)
        .map_err(|e| malformed(line, e.to_string()))?;

    Ok(TaskRecord {
        context,
        outcomes,
        expected: all_expected.then_some(expected),
    })
}

/// Inverse of [`validate_trace_row`].
pub fn record_to_row(record: &TaskRecord) -> TraceRow {
    let ctx = &record.context;
    let context = RowContext {
        embedding: if ctx.modality_features.is_some() {
            None
        } else {
            ctx.pooled_embedding.clone()
        },
        modalities: ctx
            .modality_features
            .as_ref()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.to_rows())).collect()),
        cls_attention: ctx.cls_attention.as_ref().map(Matrix::to_rows),
    };
    let actions = record
        .outcomes
        .iter()
        .enumerate()
        .map(|(a, o)| RowAction {
            action_id: a,
            reward: o.reward,
            latency: o.cost.get(0),
            money: o.cost.get(1),
            expected: record.expected.as_ref().map(|e| RowExpected {
                reward: e[a].reward,
                latency: e[a].cost.get(0),
                money: e[a].cost.get(1),
            }),
        })
        .collect();
    TraceRow { context, actions }
}

/// A complete trace: every action observed on every task.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    tasks: Vec<TaskRecord>,
    num_actions: usize,
}

impl Trace {
    /// Builds a trace, pooling modality features into embeddings.
    pub fn new(mut tasks: Vec<TaskRecord>, pooling: PoolingConfig) -> Result<Self, TraceError> {
        let num_actions = tasks.first().ok_or(TraceError::Empty)?.outcomes.len();
        for (line, t) in tasks.iter_mut().enumerate() {
            if t.outcomes.len() != num_actions {
                return Err(TraceError::MissingAction {
                    line,
                    action: t.outcomes.len().min(num_actions),
                });
            }
            embed::ensure_pooled(&mut t.context, pooling)
                .map_err(|source| TraceError::Embed { line, source })?;
        }
        let d = tasks[0]
            .context
            .pooled_embedding
            .as_ref()
            .map_or(0, Vec::len);
        for (line, t) in tasks.iter().enumerate() {
            t.context
                .validate(Some(d))
                .map_err(|e| malformed(line, e.to_string()))?;
        }
        Ok(Self { tasks, num_actions })
    }

    pub fn read_jsonl(path: &Path, pooling: PoolingConfig) -> Result<Self, TraceError> {
        let reader = BufReader::new(File::open(path)?);
        let mut tasks = Vec::new();
        let mut num_actions = None;
        for (line, text) in reader.lines().enumerate() {
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let row: TraceRow =
                serde_json::from_str(&text).map_err(|e| malformed(line, e.to_string()))?;
            let a = *num_actions.get_or_insert(row.actions.len());
            tasks.push(row_to_record(row, a, line)?);
        }
        Self::new(tasks, pooling)
    }

    /// Writes one JSON object per line; output is a pure function of the trace.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), TraceError> {
        let mut w = BufWriter::new(File::create(path)?);
        for t in &self.tasks {
            let line = serde_json::to_string(&record_to_row(t))
                .map_err(|e| malformed(0, e.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn tasks(&self) -> &[TaskRecord] {
        &self.tasks
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn context_dim(&self) -> usize {
        self.tasks[0]
            .context
            .pooled_embedding
            .as_ref()
            .map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Copy of the first `n` tasks.
    pub fn truncated(&self, n: usize) -> Trace {
        Trace {
            tasks: self.tasks[..n.min(self.tasks.len())].to_vec(),
            num_actions: self.num_actions,
        }
    }

    /// Copy with tasks in the given order; round indices are renumbered.
    pub fn permuted(&self, order: &[usize]) -> Trace {
        let tasks = order
            .iter()
            .enumerate()
            .map(|(t, &src)| {
                let mut rec = self.tasks[src].clone();
                rec.context.round_index = t;
                rec
            })
            .collect();
        Trace {
            tasks,
            num_actions: self.num_actions,
        }
    }
}

/// Source of tasks for a simulation run.
///
/// Contexts handed out carry a pooled embedding.
pub trait Environment: Sync {
    fn num_actions(&self) -> usize;
    fn num_dims(&self) -> usize;
    fn num_tasks(&self) -> usize;
    fn context(&self, t: usize) -> &TaskContext;
    /// Realized outcome of action `a` on task `t`.
    fn outcome(&self, t: usize, a: usize) -> &Outcome;
    /// Conditional mean outcome, or the realized one when unknown.
    fn expected(&self, t: usize, a: usize) -> &Outcome;
}

impl Environment for Trace {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn num_dims(&self) -> usize {
        self.tasks[0].outcomes[0].cost.len()
    }

    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn context(&self, t: usize) -> &TaskContext {
        &self.tasks[t].context
    }

    fn outcome(&self, t: usize, a: usize) -> &Outcome {
        &self.tasks[t].outcomes[a]
    }

    fn expected(&self, t: usize, a: usize) -> &Outcome {
        match &self.tasks[t].expected {
            Some(e) => &e[a],
            None => &self.tasks[t].outcomes[a],
        }
    }
}
