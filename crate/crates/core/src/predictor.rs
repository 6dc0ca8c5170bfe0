//! Reward and per-dimension cost adapters.
//!
//! Each head is a linear model over the joint (action, context) feature
//! plus a bias, fitted by minimizing
//!
//! `J(θ) = (1/2n) Σ (θ·x − y)² + (η/2) ‖θ − θ⁰‖²`
//!
//! All heads share the same design matrix, so the bank keeps one set of
//! sufficient statistics (`XᵀX`, and `Xᵀy` per head) and refits every head
//! from a single Cholesky factorization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{joint_feature, EmbedError};
use crate::linalg::{dot, Cholesky};
use crate::types::{ActionSpec, CostVector, ObservationRecord, TaskContext};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("history references unknown action {0}")]
    UnknownAction(usize),
    #[error("cannot fit on an empty history")]
    EmptyHistory,
    #[error("regularization coefficient must be positive and finite, got {0}")]
    BadRegularization(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// How the joint feature `z_a || z_x` is presented to the linear heads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// The concatenation itself.
    #[default]
    Concat,
    /// Concatenation followed by the outer product `z_a ⊗ z_x`, which lets a
    /// linear head express action-context interactions.
    Interaction,
}

impl FeatureMap {
    pub fn dim(self, d_act: usize, d_ctx: usize) -> usize {
        match self {
            FeatureMap::Concat => d_act + d_ctx,
            FeatureMap::Interaction => d_act + d_ctx + d_act * d_ctx,
        }
    }

    pub fn apply(self, joint: &[f64], d_act: usize) -> Vec<f64> {
        match self {
            FeatureMap::Concat => joint.to_vec(),
            FeatureMap::Interaction => {
                let (za, zx) = joint.split_at(d_act);
                let mut out = joint.to_vec();
                for a in za {
                    out.extend(zx.iter().map(|x| a * x));
                }
                out
            }
        }
    }
}

/// One regularized least-squares head. The last weight is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterModel {
    pub weights: Vec<f64>,
    pub prior: Vec<f64>,
    pub reg_coeff: f64,
    pub fitted_on: usize,
}

impl AdapterModel {
    /// Zero-initialized head for `feature_dim` features (plus bias).
    pub fn new(feature_dim: usize, reg_coeff: f64) -> Result<Self, PredictError> {
        Self::with_prior(vec![0.0; feature_dim + 1], reg_coeff)
    }

    /// Head whose weights start at, and are regularized toward, `prior`.
    pub fn with_prior(prior: Vec<f64>, reg_coeff: f64) -> Result<Self, PredictError> {
        if !(reg_coeff > 0.0 && reg_coeff.is_finite()) {
            return Err(PredictError::BadRegularization(reg_coeff));
        }
        Ok(Self {
            weights: prior.clone(),
            prior,
            reg_coeff,
            fitted_on: 0,
        })
    }

    /// Number of features, excluding the bias.
    pub fn feature_dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64, PredictError> {
        let d = self.feature_dim();
        if features.len() != d {
            return Err(PredictError::DimensionMismatch {
                expected: d,
                actual: features.len(),
            });
        }
        Ok(dot(&self.weights[..d], features) + self.weights[d])
    }

    /// `J(θ)` at `theta` on `(features, target)` pairs.
    pub fn objective(&self, theta: &[f64], data: &[(Vec<f64>, f64)]) -> f64 {
        let d = self.feature_dim();
        let n = data.len() as f64;
        let loss: f64 = data
            .iter()
            .map(|(x, y)| {
                let r = dot(&theta[..d], x) + theta[d] - y;
                r * r
            })
            .sum::<f64>()
            / (2.0 * n);
        let reg: f64 = theta
            .iter()
            .zip(&self.prior)
            .map(|(t, p)| (t - p) * (t - p))
            .sum();
        loss + 0.5 * self.reg_coeff * reg
    }

    /// `∇J(θ)` at the current weights.
    pub fn gradient(&self, data: &[(Vec<f64>, f64)]) -> Vec<f64> {
        let d = self.feature_dim();
        let n = data.len() as f64;
        let mut g: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.prior)
            .map(|(w, p)| self.reg_coeff * (w - p))
            .collect();
        for (x, y) in data {
            let r = (dot(&self.weights[..d], x) + self.weights[d] - y) / n;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += r * xi;
            }
            g[d] += r;
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Ridge coefficient `η`.
    pub reg_coeff: f64,
    #[serde(default)]
    pub feature_map: FeatureMap,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            reg_coeff: 1e-4,
            feature_map: FeatureMap::Concat,
        }
    }
}

/// Running `XᵀX` and per-head `Xᵀy` over bias-augmented features.
#[derive(Debug, Clone, PartialEq)]
struct RidgeStats {
    n: usize,
    dim: usize,
    xtx: Vec<f64>,
    xty: Vec<Vec<f64>>,
}

impl RidgeStats {
    fn new(dim: usize, heads: usize) -> Self {
        Self {
            n: 0,
            dim,
            xtx: vec![0.0; dim * dim],
            xty: vec![vec![0.0; dim]; heads],
        }
    }

    fn add(&mut self, features: &[f64], targets: &[f64]) {
        let d = self.dim;
        let bias = |i: usize| if i + 1 == d { 1.0 } else { features[i] };
        for i in 0..d {
            let xi = bias(i);
            if xi == 0.0 {
                continue;
            }
            for j in 0..d {
                self.xtx[i * d + j] += xi * bias(j);
            }
            for (h, y) in targets.iter().enumerate() {
                self.xty[h][i] += xi * y;
            }
        }
        self.n += 1;
    }
}

/// Reward head plus one cost head per constraint dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBank {
    pub reward_head: AdapterModel,
    pub cost_heads: Vec<AdapterModel>,
    config: PredictorConfig,
    d_act: usize,
    d_ctx: usize,
    stats: RidgeStats,
}

impl PredictorBank {
    pub fn new(
        d_act: usize,
        d_ctx: usize,
        num_dims: usize,
        config: PredictorConfig,
    ) -> Result<Self, PredictError> {
        let fd = config.feature_map.dim(d_act, d_ctx);
        let reward_head = AdapterModel::new(fd, config.reg_coeff)?;
        let cost_heads = (0..num_dims)
            .map(|_| AdapterModel::new(fd, config.reg_coeff))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            reward_head,
            cost_heads,
            config,
            d_act,
            d_ctx,
            stats: RidgeStats::new(fd + 1, num_dims + 1),
        })
    }

    pub fn config(&self) -> PredictorConfig {
        self.config
    }

    pub fn num_dims(&self) -> usize {
        self.cost_heads.len()
    }

    /// Records used by the current weights.
    pub fn fitted_on(&self) -> usize {
        self.reward_head.fitted_on
    }

    /// Records accumulated so far (fitted or not).
    pub fn observed(&self) -> usize {
        self.stats.n
    }

    pub fn features(
        &self,
        ctx: &TaskContext,
        action: &ActionSpec,
    ) -> Result<Vec<f64>, PredictError> {
        let joint = joint_feature(ctx, action)?;
        let expected = self.d_act + self.d_ctx;
        if joint.len() != expected {
            return Err(PredictError::DimensionMismatch {
                expected,
                actual: joint.len(),
            });
        }
        Ok(self.config.feature_map.apply(&joint, self.d_act))
    }

    pub fn predict_reward(
        &self,
        ctx: &TaskContext,
        action: &ActionSpec,
    ) -> Result<f64, PredictError> {
        self.reward_head.predict(&self.features(ctx, action)?)
    }

    /// Cost predictions, clamped at zero.
    pub fn predict_cost(
        &self,
        ctx: &TaskContext,
        action: &ActionSpec,
    ) -> Result<CostVector, PredictError> {
        let x = self.features(ctx, action)?;
        self.predict_cost_features(&x)
    }

    pub fn predict_reward_features(&self, x: &[f64]) -> Result<f64, PredictError> {
        self.reward_head.predict(x)
    }

    pub fn predict_cost_features(&self, x: &[f64]) -> Result<CostVector, PredictError> {
        let raw = self
            .cost_heads
            .iter()
            .map(|h| h.predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CostVector::clamped(raw))
    }

    /// Adds one observation to the sufficient statistics without refitting.
    pub fn observe(
        &mut self,
        record: &ObservationRecord,
        action: &ActionSpec,
    ) -> Result<(), PredictError> {
        if record.cost.len() != self.num_dims() {
            return Err(PredictError::DimensionMismatch {
                expected: self.num_dims(),
                actual: record.cost.len(),
            });
        }
        let x = self.features(&record.context, action)?;
        let mut targets = Vec::with_capacity(self.num_dims() + 1);
        targets.push(record.reward);
        targets.extend_from_slice(record.cost.as_slice());
        self.stats.add(&x, &targets);
        Ok(())
    }

    /// Solves every head's normal equations on the accumulated statistics.
    /// A bank with no observations keeps its prior weights.
    pub fn refit(&mut self) {
        let n = self.stats.n;
        if n == 0 {
            return;
        }
        let d = self.stats.dim;
        let eta = self.config.reg_coeff;
        let inv_n = 1.0 / n as f64;
        let mut a: Vec<f64> = self.stats.xtx.iter().map(|v| v * inv_n).collect();
        for i in 0..d {
            a[i * d + i] += eta;
        }
        let chol = Cholesky::new(&a, d).expect("XᵀX/n + ηI is positive definite for η > 0");
        let heads = std::iter::once(&mut self.reward_head).chain(self.cost_heads.iter_mut());
        for (head, xty) in heads.zip(&self.stats.xty) {
            let b: Vec<f64> = xty
                .iter()
                .zip(&head.prior)
                .map(|(s, p)| s * inv_n + eta * p)
                .collect();
            head.weights = chol.solve(&b);
            head.fitted_on = n;
        }
    }

    /// Fresh bank fitted from scratch on `history`, keeping this bank's
    /// priors and configuration.
    pub fn fit(
        &self,
        history: &[ObservationRecord],
        actions: &[ActionSpec],
    ) -> Result<PredictorBank, PredictError> {
        if history.is_empty() {
            return Err(PredictError::EmptyHistory);
        }
        let mut bank = self.clone();
        bank.stats = RidgeStats::new(self.stats.dim, self.num_dims() + 1);
        for rec in history {
            let action = actions
                .get(rec.action_id)
                .ok_or(PredictError::UnknownAction(rec.action_id))?;
            bank.observe(rec, action)?;
        }
        bank.refit();
        Ok(bank)
    }

    /// `(E_r, E_c)`: reward MSE and the per-dimension cost MSE averaged
    /// over dimensions, on held-out records.
    pub fn holdout_error(
        &self,
        validation: &[ObservationRecord],
        actions: &[ActionSpec],
    ) -> Result<(f64, f64), PredictError> {
        if validation.is_empty() {
            return Err(PredictError::EmptyHistory);
        }
        let c = self.num_dims();
        let mut er = 0.0;
        let mut ec = vec![0.0; c];
        for rec in validation {
            let action = actions
                .get(rec.action_id)
                .ok_or(PredictError::UnknownAction(rec.action_id))?;
            let x = self.features(&rec.context, action)?;
            let r = self.predict_reward_features(&x)? - rec.reward;
            er += r * r;
            let phi = self.predict_cost_features(&x)?;
            for (k, e) in ec.iter_mut().enumerate() {
                let d = phi.get(k) - rec.cost.get(k);
                *e += d * d;
            }
        }
        let n = validation.len() as f64;
        let ec_mean = if c == 0 {
            0.0
        } else {
            ec.iter().sum::<f64>() / (n * c as f64)
        };
        Ok((er / n, ec_mean))
    }

    /// Moves every head's prior to its current weights.
    pub fn reanchor_priors(&mut self) {
        for head in std::iter::once(&mut self.reward_head).chain(self.cost_heads.iter_mut()) {
            head.prior = head.weights.clone();
        }
    }

    /// Writes the head weights as JSON keyed by head name.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), PredictError> {
        let mut heads = BTreeMap::new();
        heads.insert("reward".to_string(), self.reward_head.clone());
        for (c, h) in self.cost_heads.iter().enumerate() {
            heads.insert(format!("cost_{c}"), h.clone());
        }
        let json = serde_json::to_string_pretty(&heads)
            .map_err(|e| PredictError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| PredictError::Checkpoint(e.to_string()))
    }

    /// Loads head weights written by [`save_checkpoint`](Self::save_checkpoint).
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<(), PredictError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PredictError::Checkpoint(e.to_string()))?;
        let mut heads: BTreeMap<String, AdapterModel> =
            serde_json::from_str(&text).map_err(|e| PredictError::Checkpoint(e.to_string()))?;
        let fd = self.reward_head.weights.len();
        let mut take = |name: String| -> Result<AdapterModel, PredictError> {
            let h = heads
                .remove(&name)
                .ok_or_else(|| PredictError::Checkpoint(format!("missing head `{name}`")))?;
            if h.weights.len() != fd || h.prior.len() != fd {
                return Err(PredictError::DimensionMismatch {
                    expected: fd,
                    actual: h.weights.len(),
                });
            }
            Ok(h)
        };
        let reward = take("reward".into())?;
        let costs = (0..self.num_dims())
            .map(|c| take(format!("cost_{c}")))
            .collect::<Result<Vec<_>, _>>()?;
        self.reward_head = reward;
        self.cost_heads = costs;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_action(d_act: usize) -> ActionSpec {
        ActionSpec {
            action_id: 0,
            label: "a".into(),
            action_embedding: vec![0.0; d_act],
        }
    }

    fn record(ctx: Vec<f64>, reward: f64, cost: Vec<f64>) -> ObservationRecord {
        ObservationRecord {
            reward,
            cost: CostVector::new(cost).unwrap(),
            action_id: 0,
            context: TaskContext::from_embedding(0, ctx),
        }
    }

    /// Gaussian elimination with partial pivoting, independent of the
    /// Cholesky path.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let p = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, p);
            b.swap(col, p);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn zero_weights_predict_zero() {
        let bank = PredictorBank::new(1, 2, 2, PredictorConfig::default()).unwrap();
        let ctx = TaskContext::from_embedding(0, vec![3.0, -1.0]);
        let a = one_action(1);
        assert_eq!(bank.predict_reward(&ctx, &a).unwrap(), 0.0);
        assert_eq!(bank.predict_cost(&ctx, &a).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn basis_weight_projects_first_feature() {
        let mut bank = PredictorBank::new(1, 2, 1, PredictorConfig::default()).unwrap();
        bank.reward_head.weights = vec![1.0, 0.0, 0.0, 0.0];
        let action = ActionSpec {
            action_id: 0,
            label: "a".into(),
            action_embedding: vec![1.0],
        };
        let ctx = TaskContext::from_embedding(0, vec![2.0, 3.0]);
        assert_eq!(bank.predict_reward(&ctx, &action).unwrap(), 1.0);
    }

    #[test]
    fn bias_only_cost_head_and_clamp() {
        let mut bank = PredictorBank::new(1, 2, 2, PredictorConfig::default()).unwrap();
        bank.cost_heads[1].weights = vec![0.0, 0.0, 0.0, 0.7];
        bank.cost_heads[0].weights = vec![0.0, 0.0, 0.0, -0.2];
        let ctx = TaskContext::from_embedding(0, vec![5.0, -9.0]);
        let phi = bank.predict_cost(&ctx, &one_action(1)).unwrap();
        assert_eq!(phi.as_slice(), &[0.0, 0.7]);
    }

    #[test]
    fn wrong_context_dimension_is_rejected() {
        let bank = PredictorBank::new(1, 2, 1, PredictorConfig::default()).unwrap();
        let ctx = TaskContext::from_embedding(0, vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            bank.predict_reward(&ctx, &one_action(1)),
            Err(PredictError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn huge_regularization_pins_weights_to_prior() {
        let config = PredictorConfig {
            reg_coeff: 1e9,
            ..Default::default()
        };
        let bank = PredictorBank::new(0, 2, 1, config).unwrap();
        let hist = vec![
            record(vec![1.0, 2.0], 5.0, vec![3.0]),
            record(vec![-1.0, 0.5], -2.0, vec![1.0]),
        ];
        let fitted = bank.fit(&hist, &[one_action(0)]).unwrap();
        for w in &fitted.reward_head.weights {
            assert!(w.abs() < 1e-6);
        }
    }

    #[test]
    fn single_record_matches_closed_form() {
        // θ = (x̃x̃ᵀ + ηI)⁻¹ x̃ y with θ⁰ = 0 and n = 1.
        let eta = 0.5;
        let config = PredictorConfig {
            reg_coeff: eta,
            ..Default::default()
        };
        let bank = PredictorBank::new(0, 2, 1, config).unwrap();
        let x = [1.5, -0.5, 1.0];
        let y = 2.0;
        let fitted = bank
            .fit(&[record(vec![x[0], x[1]], y, vec![0.0])], &[one_action(0)])
            .unwrap();
        let a: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| x[i] * x[j] + if i == j { eta } else { 0.0 })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = x.iter().map(|v| v * y).collect();
        let expect = gauss_solve(a, b);
        for (w, e) in fitted.reward_head.weights.iter().zip(&expect) {
            assert_abs_diff_eq!(w, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolates_three_points_as_regularization_vanishes() {
        // Three points in general position; 2 context features + bias = 3 weights.
        let config = PredictorConfig {
            reg_coeff: 1e-12,
            ..Default::default()
        };
        let bank = PredictorBank::new(0, 2, 1, config).unwrap();
        let hist = vec![
            record(vec![0.0, 0.0], 1.0, vec![0.0]),
            record(vec![1.0, 0.0], 3.0, vec![0.0]),
            record(vec![0.0, 1.0], -2.0, vec![0.0]),
        ];
        // Oracle: θ solving the 3×3 interpolation system.
        let expect = gauss_solve(
            vec![
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0],
            ],
            vec![1.0, 3.0, -2.0],
        );
        let fitted = bank.fit(&hist, &[one_action(0)]).unwrap();
        for (w, e) in fitted.reward_head.weights.iter().zip(&expect) {
            assert_abs_diff_eq!(w, e, epsilon = 1e-6);
        }
        for rec in &hist {
            let p = fitted.predict_reward(&rec.context, &one_action(0)).unwrap();
            assert_abs_diff_eq!(p, rec.reward, epsilon = 1e-6);
        }
    }

    #[test]
    fn duplicated_history_gives_same_weights() {
        let bank = PredictorBank::new(
            0,
            2,
            1,
            PredictorConfig {
                reg_coeff: 0.3,
                ..Default::default()
            },
        )
        .unwrap();
        let hist = vec![
            record(vec![0.2, 1.0], 1.0, vec![0.5]),
            record(vec![1.0, -0.3], 3.0, vec![0.1]),
            record(vec![0.7, 0.7], -2.0, vec![2.0]),
        ];
        let doubled: Vec<_> = hist.iter().flat_map(|r| [r.clone(), r.clone()]).collect();
        let a = bank.fit(&hist, &[one_action(0)]).unwrap();
        let b = bank.fit(&doubled, &[one_action(0)]).unwrap();
        for (x, y) in a.reward_head.weights.iter().zip(&b.reward_head.weights) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn fit_rejects_empty_history() {
        let bank = PredictorBank::new(0, 1, 1, PredictorConfig::default()).unwrap();
        assert!(matches!(
            bank.fit(&[], &[]),
            Err(PredictError::EmptyHistory)
        ));
    }

    #[test]
    fn holdout_error_cases() {
        let bank = PredictorBank::new(0, 1, 2, PredictorConfig::default()).unwrap();
        let a = [one_action(0)];
        // zero predictor, rewards all 1
        let val = vec![record(vec![0.0], 1.0, vec![0.0, 0.0]); 3];
        assert_eq!(bank.holdout_error(&val, &a).unwrap(), (1.0, 0.0));

        // hand arithmetic: predictions r̂ = 2x + 1, φ̂ = (x, 0.5)
        let mut b = bank.clone();
        b.reward_head.weights = vec![2.0, 1.0];
        b.cost_heads[0].weights = vec![1.0, 0.0];
        b.cost_heads[1].weights = vec![0.0, 0.5];
        let val = vec![
            record(vec![1.0], 2.0, vec![1.5, 0.5]), // r̂=3 err 1; φ̂=(1,.5) errs (.5, 0)
            record(vec![0.0], 3.0, vec![0.0, 1.5]), // r̂=1 err 2; φ̂=(0,.5) errs (0, 1)
        ];
        let (er, ec) = b.holdout_error(&val, &a).unwrap();
        assert_abs_diff_eq!(er, (1.0 + 4.0) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ec, (0.25 + 0.0 + 0.0 + 1.0) / 4.0, epsilon = 1e-15);

        // perfect predictor
        let perfect = vec![record(vec![1.0], 3.0, vec![1.0, 0.5])];
        assert_eq!(b.holdout_error(&perfect, &a).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn incremental_refit_matches_batch_fit() {
        let bank = PredictorBank::new(0, 2, 2, PredictorConfig::default()).unwrap();
        let hist: Vec<_> = (0..20)
            .map(|i| {
                let x = i as f64 / 7.0;
                record(vec![x, (x * 3.0).sin()], 1.0 + x, vec![x * 0.5, 0.1])
            })
            .collect();
        let batch = bank.fit(&hist, &[one_action(0)]).unwrap();
        let mut inc = bank.clone();
        for r in &hist {
            inc.observe(r, &one_action(0)).unwrap();
        }
        inc.refit();
        for (x, y) in batch
            .reward_head
            .weights
            .iter()
            .zip(&inc.reward_head.weights)
        {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        // refitting again is idempotent
        let w = inc.reward_head.weights.clone();
        inc.refit();
        assert_eq!(w, inc.reward_head.weights);
    }

    #[test]
    fn interaction_map_appends_outer_product() {
        let f = FeatureMap::Interaction.apply(&[1.0, 0.0, 2.0, 3.0], 2);
        assert_eq!(f, vec![1.0, 0.0, 2.0, 3.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(FeatureMap::Interaction.dim(2, 2), 8);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut bank = PredictorBank::new(1, 1, 2, PredictorConfig::default()).unwrap();
        bank.reward_head.weights = vec![0.1, 0.2, 0.3];
        bank.cost_heads[1].weights = vec![1.0, 2.0, 3.0];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        bank.save_checkpoint(&p).unwrap();
        let mut other = PredictorBank::new(1, 1, 2, PredictorConfig::default()).unwrap();
        other.load_checkpoint(&p).unwrap();
        assert_eq!(other.reward_head, bank.reward_head);
        assert_eq!(other.cost_heads, bank.cost_heads);
    }

    fn dataset() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
        (1usize..4).prop_flat_map(|d| {
            prop::collection::vec(
                (prop::collection::vec(-2.0..2.0f64, d), -5.0..5.0f64),
                1..25,
            )
        })
    }

    fn fit_data(data: &[(Vec<f64>, f64)], eta: f64) -> PredictorBank {
        let d = data[0].0.len();
        let bank = PredictorBank::new(
            0,
            d,
            1,
            PredictorConfig {
                reg_coeff: eta,
                ..Default::default()
            },
        )
        .unwrap();
        let hist: Vec<_> = data
            .iter()
            .map(|(x, y)| record(x.clone(), *y, vec![0.0]))
            .collect();
        bank.fit(&hist, &[one_action(0)]).unwrap()
    }

    proptest! {
        #[test]
        fn fitted_weights_are_stationary(data in dataset(), log_eta in -4.0..1.0f64) {
            let bank = fit_data(&data, 10f64.powf(log_eta));
            let g = bank.reward_head.gradient(&data);
            let inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(inf <= 1e-8, "gradient inf-norm {inf}");
        }

        #[test]
        fn gradient_agrees_with_finite_differences(data in dataset(), log_eta in -2.0..1.0f64) {
            let mut bank = fit_data(&data, 10f64.powf(log_eta));
            // perturb away from the optimum so the gradient is not ~0
            for w in bank.reward_head.weights.iter_mut() {
                *w += 0.3;
            }
            let head = &bank.reward_head;
            let g = head.gradient(&data);
            let h = 1e-5;
            for i in 0..g.len() {
                let mut tp = head.weights.clone();
                let mut tm = head.weights.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (head.objective(&tp, &data) - head.objective(&tm, &data)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-3 * g[i].abs().max(1e-3),
                    "coord {i}: fd {fd} vs analytic {}", g[i]);
            }
        }

        #[test]
        fn shrinkage_is_monotone_in_eta(data in dataset(), e1 in -4.0..1.0f64, gap in 0.0..3.0f64) {
            let small = fit_data(&data, 10f64.powf(e1));
            let large = fit_data(&data, 10f64.powf(e1 + gap));
            let norm = |b: &PredictorBank| b.reward_head.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            prop_assert!(norm(&small) + 1e-9 >= norm(&large));
        }
    }
}
