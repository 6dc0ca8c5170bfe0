use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::RoundModel;
use super::{context_dim, default_actions, play, SchedulerConfig, SchedulerError};
use crate::lp::{LpStatus, RoundwiseLp};
use crate::predictor::PredictorBank;
use crate::trace::Environment;
use crate::types::{ActionSpec, ObservationRecord, RunLedger, StopReason};

/// Everything the initial phase hands to the online loop.
#[derive(Debug, Clone)]
pub struct InitialPhaseResult {
    /// Dual radius `Λ`.
    pub lambda: f64,
    pub opt_hat: f64,
    pub m_t0: f64,
    pub e_r: f64,
    pub e_c: f64,
    pub phi_min: f64,
    /// Default bound `G = 2/T` on the dual gradient.
    pub grad_bound: f64,
    pub history: Vec<ObservationRecord>,
    pub ledger: RunLedger,
    /// Adapters fitted on the whole initial-phase history.
    pub bank: PredictorBank,
    pub actions: Vec<ActionSpec>,
    /// Set when the budget ran out before the phase completed.
    pub stop: Option<StopReason>,
}

/// `M(T0) = √(A(E_r + d·E_c) + 4 ln(T·C)/T0)` with `d = C`.
pub fn m_t0(
    num_actions: usize,
    num_dims: usize,
    horizon: usize,
    t0: usize,
    e_r: f64,
    e_c: f64,
) -> f64 {
    let a = num_actions as f64;
    let c = num_dims as f64;
    (a * (e_r + c * e_c) + 4.0 * (horizon as f64 * c).ln() / t0 as f64).sqrt()
}

/// `Λ = (T/Φ_min)·(OPT̂ + M)`.
pub fn lambda_radius(horizon: usize, phi_min: f64, opt_hat: f64, m: f64) -> f64 {
    horizon as f64 / phi_min * (opt_hat + m)
}

pub fn run_initial_phase(
    env: &dyn Environment,
    config: &SchedulerConfig,
) -> Result<InitialPhaseResult, SchedulerError> {
    config.validate(env)?;
    let a = env.num_actions();
    let c = env.num_dims();
    let t0 = config.t0;
    let actions = default_actions(a);
    let budget = config.charge_initial_phase.then_some(&config.budget);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut schedule = Vec::with_capacity((a + 1) * t0);
    let mut block: Vec<usize> = (0..a).collect();
    for _ in 0..t0 {
        block.shuffle(&mut rng);
        schedule.extend_from_slice(&block);
    }
    for _ in 0..t0 {
        schedule.push(rng.random_range(0..a));
    }

    let mut ledger = RunLedger::new(c);
    let mut history = Vec::with_capacity(schedule.len());
    let mut stop = None;
    for (t, &action) in schedule.iter().enumerate() {
        match play(env, &mut ledger, budget, t, action) {
            Ok(rec) => history.push(rec),
            Err(reason) => {
                stop = Some(reason);
                break;
            }
        }
    }

    let empty_bank = PredictorBank::new(a, context_dim(env)?, c, config.predictor)?;
    let phi_min = config.phi_min.value(&config.budget);
    if stop.is_some() {
        return Ok(InitialPhaseResult {
            lambda: 0.0,
            opt_hat: 0.0,
            m_t0: 0.0,
            e_r: 0.0,
            e_c: 0.0,
            phi_min,
            grad_bound: 2.0 / config.horizon as f64,
            history,
            ledger,
            bank: empty_bank,
            actions,
            stop,
        });
    }

    let stage_one = &history[..a * t0];
    let stage_two = &history[a * t0..];
    let bank_one = empty_bank.fit(stage_one, &actions)?;
    let mut model = RoundModel::new(
        &config.prediction,
        bank_one,
        actions.clone(),
        stage_one,
        config.seed,
        2,
    );

    let budget_totals = config.budget.as_slice();
    let ratio = |k: usize, v: f64| {
        if budget_totals[k] > 0.0 {
            v / budget_totals[k]
        } else {
            0.0
        }
    };
    let mut rewards = Vec::with_capacity(t0);
    let mut costs = Vec::with_capacity(t0);
    let (mut e_r, mut e_c) = (0.0, 0.0);
    for (i, rec) in stage_two.iter().enumerate() {
        let t = a * t0 + i;
        let preds = model.predict_all(env, t)?;
        let (r_hat, phi_hat) = &preds[rec.action_id];
        e_r += (r_hat - rec.reward).powi(2);
        for k in 0..c {
            e_c += (phi_hat.get(k) - rec.cost.get(k)).powi(2);
        }
        rewards.push(preds.iter().map(|(r, _)| r / t0 as f64).collect::<Vec<_>>());
        costs.push(
            preds
                .iter()
                .map(|(_, phi)| (0..c).map(|k| ratio(k, phi.get(k)) / t0 as f64).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
    }
    e_r /= t0 as f64;
    e_c /= (t0 * c.max(1)) as f64;
    let m = m_t0(a, c, config.horizon, t0, e_r, e_c);
    let inv_t = 1.0 / config.horizon as f64;
    let rhs = (0..c)
        .map(|k| {
            if budget_totals[k] > 0.0 {
                inv_t + 2.0 * m / budget_totals[k]
            } else {
                inv_t
            }
        })
        .collect();
    let lp = RoundwiseLp::new(rewards, costs, rhs, true)?;
    if let Some(path) = &config.lp_dump {
        lp.dump_json(path)?;
    }
    let sol = lp.solve()?;
    let opt_hat = match sol.status {
        LpStatus::Optimal => sol.objective_value,
        LpStatus::Infeasible => 0.0,
    };
    let lambda = lambda_radius(config.horizon, phi_min, opt_hat, m);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SchedulerError::Config(format!(
            "dual radius {lambda} is not positive (OPT̂ = {opt_hat}, M = {m}, Φ_min = {phi_min})"
        )));
    }

    let mut bank = model.bank().fit(&history, &actions)?;
    if config.reanchor_prior {
        bank.reanchor_priors();
    }
    // Per-round allowance plus Φ_min/T on the normalized scale. The largest
    // observed cost ratio can be tens of allowances and stalls the multipliers.
    let grad_bound = 2.0 * inv_t;

    Ok(InitialPhaseResult {
        lambda,
        opt_hat,
        m_t0: m,
        e_r,
        e_c,
        phi_min,
        grad_bound,
        history,
        ledger,
        bank,
        actions,
        stop: None,
    })
}
