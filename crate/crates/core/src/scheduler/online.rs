use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::initial::{run_initial_phase, InitialPhaseResult};
use super::model::RoundModel;
use super::report::{RoundDiagnostics, RunReport};
use super::sampling::sampling_distribution;
use super::{play, GradientSource, SchedulerConfig, SchedulerError};
use crate::constrainer::{dual_gradient, lagrangian_score, omd_step, DualState, StepSize};
use crate::trace::Environment;
use crate::types::{BudgetVector, StopReason};

pub fn run_exploration_exploitation(
    env: &dyn Environment,
    config: &SchedulerConfig,
    init: InitialPhaseResult,
) -> Result<RunReport, SchedulerError> {
    config.validate(env)?;
    let mut report = RunReport::from_initial(&init);
    if let Some(reason) = init.stop {
        report.stop_reason = reason;
        return Ok(report);
    }
    let a = env.num_actions();
    let c = env.num_dims();
    let t_ee = config.t_ee(a);
    let rho = config.rho_for(a);
    let step = config.step_size.unwrap_or_else(|| {
        StepSize::default_constant(c, t_ee, config.gradient_bound.unwrap_or(init.grad_bound))
    });
    let mut dual = DualState::new(c, init.lambda, step)?;

    // Without charging, the initial phase is paid for outside the budget.
    let effective_budget = if config.charge_initial_phase {
        config.budget.clone()
    } else {
        let totals = (0..c)
            .map(|k| config.budget.get(k) + init.ledger.consumed.get(k))
            .collect();
        BudgetVector::new(totals).map_err(|e| SchedulerError::Config(e.to_string()))?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut model = RoundModel::new(
        &config.prediction,
        init.bank,
        init.actions,
        &init.history,
        config.seed,
        3,
    );
    let mut ledger = init.ledger;
    let mut stop = StopReason::Horizon;
    let start = config.initial_rounds(a);

    for (k, t) in (start..config.horizon).enumerate() {
        let preds = model.predict_all(env, t)?;
        let scores: Vec<f64> = preds
            .iter()
            .map(|(r, phi)| lagrangian_score(*r, phi, &dual, &config.budget, config.horizon))
            .collect();
        let dist = sampling_distribution(&scores, rho);
        debug_assert!(dist.is_valid(1e-9));
        let action = dist.sample(&mut rng);
        let record = match play(env, &mut ledger, Some(&effective_budget), t, action) {
            Ok(rec) => rec,
            Err(reason) => {
                stop = reason;
                break;
            }
        };
        model.observe(&record)?;
        debug_assert_eq!(model.observed(), t + 1);
        if (k + 1) % config.refit_every == 0 {
            model.refit();
        }
        let grad_cost = match config.gradient_source {
            GradientSource::Realized => &record.cost,
            GradientSource::Predicted => &preds[action].1,
        };
        let g = dual_gradient(grad_cost, &config.budget, config.horizon)?;
        dual = omd_step(&dual, &g, k + 1)?;
        assert!(
            dual.is_feasible(1e-9),
            "multipliers left the feasible set at round {t}"
        );
        if config.record_rounds {
            report.rounds.push(RoundDiagnostics {
                round: t,
                action,
                reward: record.reward,
                cost: record.cost.as_slice().to_vec(),
                lambda: dual.lambda.clone(),
                slack: dual.slack,
                score_max: scores[dist.argmax_action],
            });
        }
    }

    report.stop_reason = stop;
    report.ledger = ledger;
    report.final_dual = Some(dual);
    Ok(report)
}

/// Both phases on one shared ledger.
pub fn run_full(
    env: &dyn Environment,
    config: &SchedulerConfig,
) -> Result<RunReport, SchedulerError> {
    let init = run_initial_phase(env, config)?;
    run_exploration_exploitation(env, config, init)
}
