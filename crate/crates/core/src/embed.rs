//! Context and action representation.
//!
//! The context embedding is a parameter-free pooling of hidden states
//! weighted by the attention rows of a leading CLS token:
//!
//! `z = (1/H) Σ_h (1/L) Σ_l α_{h,l} · h_l`
//!
//! The `1/L` factor is applied as written, on top of whatever scale the
//! attention rows carry. No transformer is run here; hidden states and
//! attention rows come from traces or synthetic generators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActionSpec, Matrix, TaskContext};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("attention row length {attention} does not match sequence length {tokens}")]
    DimensionMismatch { attention: usize, tokens: usize },
    #[error("hidden states must have at least one token and one head")]
    Empty,
    #[error("negative attention weight {value} at head {head}, token {token}")]
    NegativeAttention {
        head: usize,
        token: usize,
        value: f64,
    },
    #[error("modality `{tag}` has per-token dimension {actual}, expected {expected}")]
    ModalityDimension {
        tag: String,
        expected: usize,
        actual: usize,
    },
    #[error("context has no pooled embedding and no modality features")]
    MissingEmbedding,
}

/// Hidden states (`L × d_hid`) with CLS attention rows (`H × L`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    hidden_states: Matrix,
    cls_attention: Matrix,
}

impl AttentionBundle {
    pub fn new(hidden_states: Matrix, cls_attention: Matrix) -> Result<Self, EmbedError> {
        if hidden_states.nrows() == 0 || cls_attention.nrows() == 0 {
            return Err(EmbedError::Empty);
        }
        if cls_attention.ncols() != hidden_states.nrows() {
            return Err(EmbedError::DimensionMismatch {
                attention: cls_attention.ncols(),
                tokens: hidden_states.nrows(),
            });
        }
        for head in 0..cls_attention.nrows() {
            for (token, &value) in cls_attention.row(head).iter().enumerate() {
                if value < 0.0 || value.is_nan() {
                    return Err(EmbedError::NegativeAttention { head, token, value });
                }
            }
        }
        Ok(Self {
            hidden_states,
            cls_attention,
        })
    }

    /// Uniform unit attention from a single head, i.e. mean pooling.
    pub fn uniform(hidden_states: Matrix) -> Result<Self, EmbedError> {
        let l = hidden_states.nrows();
        let att = Matrix::from_rows(vec![vec![1.0; l]]).expect("single row");
        Self::new(hidden_states, att)
    }

    pub fn hidden_states(&self) -> &Matrix {
        &self.hidden_states
    }

    pub fn cls_attention(&self) -> &Matrix {
        &self.cls_attention
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingConfig {
    /// Rescale each attention row to sum to one before pooling.
    #[serde(default)]
    pub normalize_attention: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding(pub Vec<f64>);

pub fn cls_attentive_pool(bundle: &AttentionBundle) -> PooledEmbedding {
    pool_with(bundle, PoolingConfig::default())
}

pub fn pool_with(bundle: &AttentionBundle, config: PoolingConfig) -> PooledEmbedding {
    let hidden = &bundle.hidden_states;
    let att = &bundle.cls_attention;
    let (l, d) = (hidden.nrows(), hidden.ncols());
    let heads = att.nrows();
    let mut z = vec![0.0; d];
    for h in 0..heads {
        let alpha = att.row(h);
        let row_scale = if config.normalize_attention {
            let s: f64 = alpha.iter().sum();
            if s > 0.0 {
                1.0 / s
            } else {
                0.0
            }
        } else {
            1.0
        };
        for (tok, &a) in alpha.iter().enumerate() {
            let w = a * row_scale / (l as f64 * heads as f64);
            if w == 0.0 {
                continue;
            }
            for (zj, hj) in z.iter_mut().zip(hidden.row(tok)) {
                *zj += w * hj;
            }
        }
    }
    PooledEmbedding(z)
}

/// Stacks the modality matrices (in tag order) into one hidden-state
/// matrix and pairs it with the context's attention rows, or uniform
/// attention when none are given.
pub fn bundle_from_context(ctx: &TaskContext) -> Result<AttentionBundle, EmbedError> {
    let mods = ctx
        .modality_features
        .as_ref()
        .ok_or(EmbedError::MissingEmbedding)?;
    let d = mods.values().next().map_or(0, Matrix::ncols);
    let mut rows = Vec::new();
    for (tag, m) in mods {
        if m.ncols() != d {
            return Err(EmbedError::ModalityDimension {
                tag: tag.clone(),
                expected: d,
                actual: m.ncols(),
            });
        }
        rows.extend(m.to_rows());
    }
    if rows.is_empty() {
        return Err(EmbedError::Empty);
    }
    let hidden = Matrix::from_rows(rows).expect("uniform width checked above");
    match &ctx.cls_attention {
        Some(att) => AttentionBundle::new(hidden, att.clone()),
        None => AttentionBundle::uniform(hidden),
    }
}

/// Pooled embedding of a context: the stored one if present, otherwise
/// pooled from its modality features.
pub fn context_embedding(ctx: &TaskContext, config: PoolingConfig) -> Result<Vec<f64>, EmbedError> {
    if let Some(z) = &ctx.pooled_embedding {
        return Ok(z.clone());
    }
    let bundle = bundle_from_context(ctx)?;
    Ok(pool_with(&bundle, config).0)
}

/// Fills in `pooled_embedding` from the modality features if it is missing.
pub fn ensure_pooled(ctx: &mut TaskContext, config: PoolingConfig) -> Result<(), EmbedError> {
    if ctx.pooled_embedding.is_none() {
        ctx.pooled_embedding = Some(context_embedding(ctx, config)?);
    }
    Ok(())
}

/// `z_a || z_x`: action embedding followed by the context embedding.
pub fn joint_feature(ctx: &TaskContext, action: &ActionSpec) -> Result<Vec<f64>, EmbedError> {
    let mut out = action.action_embedding.clone();
    match &ctx.pooled_embedding {
        Some(z) => out.extend_from_slice(z),
        None => out.extend(context_embedding(ctx, PoolingConfig::default())?),
    }
    Ok(out)
}
