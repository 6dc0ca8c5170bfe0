use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::predictor::{PredictError, PredictorBank};
use crate::trace::Environment;
use crate::types::{ActionSpec, CostVector, ObservationRecord};

/// Where per-round reward and cost predictions come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictionMode {
    /// The ridge adapters, refitted online.
    #[default]
    Fitted,
    /// The environment's realized per-round values.
    Oracle,
    /// Fitted adapters with the listed heads replaced by uniform noise over
    /// the target range seen in the initial phase.
    Ablated {
        #[serde(default)]
        reward: bool,
        #[serde(default)]
        cost_dims: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct RandomHeads {
    reward: Option<(f64, f64)>,
    cost: Vec<Option<(f64, f64)>>,
    rng: ChaCha8Rng,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Per-round predictor used by the scheduling loop.
#[derive(Debug, Clone)]
pub struct RoundModel {
    bank: PredictorBank,
    actions: Vec<ActionSpec>,
    oracle: bool,
    random: Option<RandomHeads>,
    observed: usize,
}

impl RoundModel {
    pub fn new(
        mode: &PredictionMode,
        bank: PredictorBank,
        actions: Vec<ActionSpec>,
        history: &[ObservationRecord],
        seed: u64,
        stream: u64,
    ) -> Self {
        let random = match mode {
            PredictionMode::Ablated { reward, cost_dims } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let reward = reward.then(|| range(history.iter().map(|r| r.reward)));
                let cost = (0..bank.num_dims())
                    .map(|c| {
                        cost_dims
                            .contains(&c)
                            .then(|| range(history.iter().map(|r| r.cost.get(c))))
                    })
                    .collect();
                Some(RandomHeads { reward, cost, rng })
            }
            _ => None,
        };
        Self {
            bank,
            actions,
            oracle: matches!(mode, PredictionMode::Oracle),
            random,
            observed: history.len(),
        }
    }

    pub fn bank(&self) -> &PredictorBank {
        &self.bank
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    /// Records in the history set so far.
    pub fn observed(&self) -> usize {
        self.observed
    }

    /// `(r̂, φ̂)` for every action at round `t`.
    pub fn predict_all(
        &mut self,
        env: &dyn Environment,
        t: usize,
    ) -> Result<Vec<(f64, CostVector)>, PredictError> {
        if self.oracle {
            return Ok((0..self.actions.len())
                .map(|a| {
                    let o = env.outcome(t, a);
                    (o.reward, o.cost.clone())
                })
                .collect());
        }
        let ctx = env.context(t);
        let mut out = Vec::with_capacity(self.actions.len());
        for action in &self.actions {
            let x = self.bank.features(ctx, action)?;
            let mut reward = self.bank.predict_reward_features(&x)?;
            let mut cost = self.bank.predict_cost_features(&x)?;
            if let Some(rh) = self.random.as_mut() {
                if let Some(r) = rh.reward {
                    reward = draw(&mut rh.rng, r);
                }
                let mut values = cost.as_slice().to_vec();
                for (v, r) in values.iter_mut().zip(&rh.cost) {
                    if let Some(r) = r {
                        *v = draw(&mut rh.rng, *r);
                    }
                }
                cost = CostVector::clamped(values);
            }
            out.push((reward, cost));
        }
        Ok(out)
    }

    pub fn observe(&mut self, record: &ObservationRecord) -> Result<(), PredictError> {
        self.observed += 1;
        if self.oracle {
            return Ok(());
        }
        let action = self
            .actions
            .get(record.action_id)
            .ok_or(PredictError::UnknownAction(record.action_id))?;
        self.bank.observe(record, action)
    }

    pub fn refit(&mut self) {
        if !self.oracle {
            self.bank.refit();
        }
    }
}
