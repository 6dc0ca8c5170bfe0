//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::oracles::{eg_closed_form, lp_vertex_enumeration, ridge_normal_equations};
use m2cmab::constrainer::{lagrangian_score, omd_step};
use m2cmab::experiment::matrix::sample_std;
use m2cmab::experiment::*;
use m2cmab::lp::LpStatus;
use m2cmab::scheduler::{default_actions, lambda_radius, m_t0, sampling_distribution};
use m2cmab::{
    hindsight_opt, run_full, AdapterModel, BudgetVector, CostVector, DualState, FeatureMap,
    ObservationRecord, PredictorBank, PredictorConfig, RoundwiseLp, SchedulerConfig, StepSize,
    TaskContext, Trace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const FORMULA_TOL: f64 = 1e-9;
const RIDGE_TOL: f64 = 1e-6;
const LP_TOL: f64 = 1e-6;
const OMD_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-9;
const REGRET_GROWTH_MAX: f64 = 1.8;
const RANDOM_MARGIN: f64 = 0.05;
const OPTIMAL_GAP: f64 = 0.05;
const SENSITIVITY_SPREAD: f64 = 0.05;

const SEEDS: u64 = 20;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn linear_trace(n: usize, seed: u64) -> Trace {
    generate_synthetic_trace(&GeneratorSpec::linear(n), seed).expect("linear trace")
}

fn hetero_trace(n: usize, seed: u64) -> Trace {
    generate_synthetic_trace(&GeneratorSpec::heterogeneous(n), seed).expect("heterogeneous trace")
}

fn budget_safety() -> Check {
    let mut spec = MatrixSpec::new(2000, (0..5).collect());
    spec.policies = Policy::ALL.to_vec();
    spec.regimes = RegimeName::ALL.to_vec();
    let datasets = [
        Dataset::from_trace("heterogeneous", hetero_trace(2000, 1)),
        Dataset::from_trace("linear", linear_trace(2000, 1)),
    ];
    let report = run_matrix(&spec, &datasets).map_err(|e| e.to_string())?;
    ensure(
        report.cells.len() == 2 * 3 * 6 * 5,
        format!("{} cells", report.cells.len()),
    )?;
    if let Some(c) = report.failures().next() {
        return Err(format!("{:?} failed: {:?}", c.key, c.error));
    }
    for c in &report.cells {
        let m = c.metrics.as_ref().unwrap();
        let over = m.consumed.iter().zip(&m.budget).any(|(u, b)| u > b);
        ensure(
            !over && m.within_budget,
            format!("{:?} exceeded its budget", c.key),
        )?;
    }
    Ok(format!("{} runs, 0 over budget", report.cells.len()))
}

fn formula_conformance() -> Check {
    let close = |a: f64, b: f64, what: &str| {
        ensure((a - b).abs() <= FORMULA_TOL, format!("{what}: {a} vs {b}"))
    };
    // Score: r̂=1, φ̂/Φ=0.2, 1/T=0.1, λ=2.
    let dual = DualState::from_parts(vec![2.0], 8.0, 10.0, StepSize::Constant(1.0))
        .map_err(|e| e.to_string())?;
    let budget = BudgetVector::new(vec![10.0]).unwrap();
    let phi = CostVector::new(vec![2.0]).unwrap();
    close(
        lagrangian_score(1.0, &phi, &dual, &budget, 10),
        0.8,
        "score",
    )?;
    let zero = DualState::from_parts(vec![0.0], 10.0, 10.0, StepSize::Constant(1.0)).unwrap();
    close(
        lagrangian_score(3.5, &phi, &zero, &budget, 10),
        3.5,
        "score at λ=0",
    )?;
    // Probabilities: A=2, scores (1,0), ρ=8.
    let dist = sampling_distribution(&[1.0, 0.0], 8.0);
    close(dist.probabilities[1], 0.1, "p(a2)")?;
    close(dist.probabilities[0], 0.9, "p(a1)")?;
    let uniform = sampling_distribution(&[0.3, -1.0, 2.0, 0.0, 5.0], 0.0);
    for p in &uniform.probabilities {
        close(*p, 0.2, "ρ=0 probability")?;
    }
    // M(T0) with zero errors, and with errors.
    close(
        m_t0(5, 2, 400, 10, 0.0, 0.0),
        (4.0 * 800f64.ln() / 10.0).sqrt(),
        "M(T0) zero error",
    )?;
    let hand = (3.0 * (0.1 + 2.0 * 0.05) + 4.0 * 200f64.ln() / 20.0).sqrt();
    close(m_t0(3, 2, 100, 20, 0.1, 0.05), hand, "M(T0)")?;
    // Λ = (T/Φ_min)(OPT̂ + M).
    close(lambda_radius(100, 50.0, 2.0, 0.5), 5.0, "Λ")?;
    Ok("score, probabilities, M(T0) and Λ within 1e-9".into())
}

fn ridge_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for instance in 0..100 {
        let d_ctx = rng.random_range(1..=18);
        let n = rng.random_range(1..=50);
        let eta = 10f64.powf(rng.random_range(-4.0..0.0));
        let config = PredictorConfig {
            reg_coeff: eta,
            feature_map: FeatureMap::Concat,
        };
        let actions = default_actions(2);
        let mut bank = PredictorBank::new(2, d_ctx, 1, config).map_err(|e| e.to_string())?;
        let prior: Vec<f64> = (0..d_ctx + 3)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        bank.reward_head = AdapterModel::with_prior(prior.clone(), eta).unwrap();
        let mut history = Vec::new();
        let mut xs = Vec::new();
        let (mut ys, mut cs) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let a = rng.random_range(0..2);
            let ctx: Vec<f64> = (0..d_ctx).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(-3.0..3.0);
            let c = rng.random_range(0.0..2.0);
            let mut x = vec![0.0, 0.0];
            x[a] = 1.0;
            x.extend(&ctx);
            xs.push(x);
            ys.push(y);
            cs.push(c);
            history.push(ObservationRecord {
                reward: y,
                cost: CostVector::new(vec![c]).unwrap(),
                action_id: a,
                context: TaskContext::from_embedding(0, ctx),
            });
        }
        let fitted = bank.fit(&history, &actions).map_err(|e| e.to_string())?;
        let want_r = ridge_normal_equations(&xs, &ys, eta, &prior);
        let want_c = ridge_normal_equations(&xs, &cs, eta, &vec![0.0; d_ctx + 3]);
        for (got, want) in [
            (&fitted.reward_head.weights, &want_r),
            (&fitted.cost_heads[0].weights, &want_c),
        ] {
            for (g, w) in got.iter().zip(want) {
                worst = worst.max((g - w).abs());
            }
        }
        ensure(
            worst <= RIDGE_TOL,
            format!("instance {instance}: coefficient error {worst:e}"),
        )?;
    }
    Ok(format!("100 instances, max coefficient error {worst:.1e}"))
}

fn lp_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    for instance in 0..200 {
        let t_rows = rng.random_range(1..=3);
        let a = rng.random_range(1..=3);
        let c = rng.random_range(1..=2);
        let rewards: Vec<Vec<f64>> = (0..t_rows)
            .map(|_| (0..a).map(|_| rng.random_range(-1.0..5.0)).collect())
            .collect();
        let costs: Vec<Vec<Vec<f64>>> = (0..t_rows)
            .map(|_| {
                (0..a)
                    .map(|_| (0..c).map(|_| rng.random_range(0.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = (0..c)
            .map(|_| rng.random_range(0.0..1.5 * t_rows as f64))
            .collect();
        let allow_skip = rng.random_bool(0.5);
        let want = lp_vertex_enumeration(&rewards, &costs, &rhs, allow_skip);
        let lp = RoundwiseLp::new(rewards, costs, rhs, allow_skip).map_err(|e| e.to_string())?;
        let got = lp
            .solve()
            .map_err(|e| format!("instance {instance}: {e}"))?;
        match (want, got.status) {
            (Some(v), LpStatus::Optimal) => {
                worst = worst.max((v - got.objective_value).abs());
                ensure(
                    worst <= LP_TOL,
                    format!("instance {instance}: {v} vs {}", got.objective_value),
                )?;
            }
            (None, LpStatus::Infeasible) => infeasible += 1,
            (w, s) => return Err(format!("instance {instance}: oracle {w:?}, solver {s:?}")),
        }
    }
    Ok(format!(
        "200 instances ({infeasible} infeasible), max objective error {worst:.1e}"
    ))
}

fn omd_conformance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for script in 0..50 {
        let c = rng.random_range(1..=3);
        let radius = rng.random_range(0.5..20.0);
        let step = if script % 2 == 0 {
            StepSize::Constant(rng.random_range(0.01..2.0))
        } else {
            StepSize::InverseSqrt(rng.random_range(0.01..2.0))
        };
        let mut state = DualState::new(c, radius, step).map_err(|e| e.to_string())?;
        let (lambda0, slack0) = (state.lambda.clone(), state.slack);
        let mut grads = Vec::new();
        let mut steps = Vec::new();
        for round in 1..=10 {
            let g: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            state = omd_step(&state, &g, round).map_err(|e| e.to_string())?;
            grads.push(g);
            steps.push(step.at(round));
            let (want, want_slack) = eg_closed_form(&lambda0, slack0, radius, &steps, &grads);
            for (g, w) in state.lambda.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
            worst = worst.max((state.slack - want_slack).abs());
            ensure(
                worst <= OMD_TOL,
                format!("script {script}, step {round}: error {worst:e}"),
            )?;
        }
    }
    // Feasibility along whole simulations.
    let mut rounds = 0;
    for (name, trace) in [
        ("linear", linear_trace(1500, 3)),
        ("heterogeneous", hetero_trace(1500, 3)),
    ] {
        for regime in derive_budget_regimes(&trace, 1500).unwrap() {
            let mut config = SchedulerConfig::new(1500, 10, regime.budget.clone());
            config.record_rounds = true;
            let report = run_full(&trace, &config).map_err(|e| e.to_string())?;
            for r in &report.rounds {
                let l1: f64 = r.lambda.iter().sum();
                ensure(
                    r.lambda.iter().all(|l| *l >= 0.0)
                        && l1 <= report.lambda + FEASIBILITY_TOL * report.lambda.max(1.0),
                    format!(
                        "{name}: ‖λ‖₁ = {l1} > Λ = {} at round {}",
                        report.lambda, r.round
                    ),
                )?;
            }
            rounds += report.rounds.len();
        }
    }
    Ok(format!(
        "50 scripts, max error {worst:.1e}; ‖λ‖₁ ≤ Λ on {rounds} simulated rounds"
    ))
}

fn sublinear_regret() -> Check {
    use rayon::prelude::*;
    let horizons = [2500usize, 5000, 10000];
    let mut mean_regret = Vec::new();
    for &t in &horizons {
        let regrets: Result<Vec<f64>, String> = (0..SEEDS)
            .into_par_iter()
            .map(|seed| {
                let trace = linear_trace(t, seed);
                let regimes = derive_budget_regimes(&trace, t).map_err(|e| e.to_string())?;
                let budget = regimes[1].budget.clone();
                let t0 = ((t as f64).sqrt().round() as usize).max(1);
                let config = SchedulerConfig::new(t, t0, budget.clone()).with_seed(seed);
                let opt = hindsight_opt(&trace, &budget, t).map_err(|e| e.to_string())?;
                let report = run_full(&trace, &config).map_err(|e| e.to_string())?;
                Ok(opt - report.ledger.reward_sum)
            })
            .collect();
        mean_regret.push(mean(&regrets?));
    }
    let per_round: Vec<f64> = mean_regret
        .iter()
        .zip(&horizons)
        .map(|(r, t)| r / *t as f64)
        .collect();
    let growth = [
        mean_regret[1] / mean_regret[0],
        mean_regret[2] / mean_regret[1],
    ];
    let detail = format!(
        "Reg/T = {:.4}, {:.4}, {:.4}; Reg(2T)/Reg(T) = {:.3}, {:.3}",
        per_round[0], per_round[1], per_round[2], growth[0], growth[1]
    );
    ensure(
        per_round[0] > per_round[1] && per_round[1] > per_round[2],
        format!("not decreasing: {detail}"),
    )?;
    ensure(
        growth.iter().all(|g| *g <= REGRET_GROWTH_MAX),
        format!("growth too fast: {detail}"),
    )?;
    Ok(detail)
}

fn ordering() -> Check {
    let mut spec = MatrixSpec::new(2500, (0..SEEDS).collect());
    spec.regimes = vec![RegimeName::Generous];
    let ds = [Dataset::from_trace("heterogeneous", hetero_trace(2500, 0))];
    let report = run_matrix(&spec, &ds).map_err(|e| e.to_string())?;
    ensure(report.failures().next().is_none(), "a run failed")?;
    let get = |p: Policy| {
        report
            .aggregate("heterogeneous", RegimeName::Generous, p.label(), "default")
            .map(|a| a.mean_reward)
            .unwrap()
    };
    let (opt, ours) = (get(Policy::Optimal), get(Policy::M2Cmab));
    let baselines = [
        Policy::Random,
        Policy::LatencyFirst,
        Policy::MoneyFirst,
        Policy::ThresholdBased,
    ];
    let detail = format!(
        "optimal {opt:.3}, m2cmab {ours:.3}, {}",
        baselines
            .iter()
            .map(|p| format!("{} {:.3}", p.label(), get(*p)))
            .collect::<Vec<_>>()
            .join(", ")
    );
    ensure(opt >= ours, format!("optimal below scheduler: {detail}"))?;
    for p in baselines {
        ensure(
            ours >= get(p),
            format!("{} beats scheduler: {detail}", p.label()),
        )?;
    }
    ensure(
        ours >= (1.0 + RANDOM_MARGIN) * get(Policy::Random),
        format!("margin over random < 5%: {detail}"),
    )?;
    ensure(
        ours >= (1.0 - OPTIMAL_GAP) * opt,
        format!("gap to optimal > 5%: {detail}"),
    )?;
    Ok(detail)
}

fn sensitivity() -> Check {
    let ratios = [0.025, 0.05, 0.1];
    let mut spec = MatrixSpec::new(2500, (0..SEEDS).collect());
    spec.policies = vec![Policy::M2Cmab];
    spec.regimes = vec![RegimeName::Restricted];
    spec.init_ratio_sweep = ratios.to_vec();
    let ds = [Dataset::from_trace("linear", linear_trace(2500, 0))];
    let report = run_matrix(&spec, &ds).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("sensitivity.json");
    report.write_json(&path).map_err(|e| e.to_string())?;
    let report = ExperimentReport::read_json(&path).map_err(|e| e.to_string())?;
    let means: Vec<f64> = ratios
        .iter()
        .map(|r| {
            report
                .aggregate(
                    "linear",
                    RegimeName::Restricted,
                    "m2cmab",
                    &format!("init_ratio_{r}"),
                )
                .map(|a| a.mean_reward)
                .ok_or_else(|| format!("no cell for ratio {r}"))
        })
        .collect::<Result<_, _>>()?;
    let best = (0..means.len())
        .max_by(|&i, &j| means[i].total_cmp(&means[j]))
        .unwrap();
    let non_increasing = means[best..].windows(2).all(|w| w[1] <= w[0]);
    let (lo, hi) = means
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), m| (l.min(*m), h.max(*m)));
    let spread = (hi - lo) / hi;
    let detail = format!(
        "mean reward {:.3} / {:.3} / {:.3} at 2.5/5/10%, best at {}%, spread {:.1}%",
        means[0],
        means[1],
        means[2],
        100.0 * ratios[best],
        100.0 * spread
    );
    ensure(
        non_increasing || spread < SENSITIVITY_SPREAD,
        format!("bad shape: {detail}"),
    )?;
    Ok(detail)
}

fn ablation() -> Check {
    let mut spec = MatrixSpec::new(2500, (0..SEEDS).collect());
    spec.policies = vec![Policy::M2Cmab];
    spec.regimes = vec![RegimeName::Normal];
    spec.ablations = true;
    let ds = [Dataset::from_trace("linear", linear_trace(2500, 0))];
    let report = run_matrix(&spec, &ds).map_err(|e| e.to_string())?;
    let rewards = |variant: &str| -> Vec<f64> {
        report
            .cells
            .iter()
            .filter(|c| c.key.variant == variant)
            .filter_map(|c| c.metrics.as_ref().map(|m| m.avg_reward))
            .collect()
    };
    let full = mean(&rewards("default"));
    let by_reward = rewards("ablate_reward");
    let mut detail = format!("default {full:.3}, reward ablated {:.3}", mean(&by_reward));
    for dim in ["latency", "money"] {
        let by_cost = rewards(&format!("ablate_{dim}"));
        let n = by_cost.len() as f64;
        let pooled_se =
            ((sample_std(&by_reward).unwrap().powi(2) + sample_std(&by_cost).unwrap().powi(2)) / n)
                .sqrt();
        // Degradation difference equals the difference of ablated means.
        let margin = mean(&by_cost) - mean(&by_reward);
        detail.push_str(&format!(
            ", {dim} ablated {:.3} (margin {:.1} SE)",
            mean(&by_cost),
            margin / pooled_se
        ));
        ensure(
            margin > pooled_se,
            format!("reward ablation not clearly worse: {detail}"),
        )?;
    }
    Ok(detail)
}

fn reward_mapping() -> Check {
    let table = [
        (0.0, 1u8),
        (0.07, 2),
        (0.15, 3),
        (0.2, 3),
        (0.3, 4),
        (0.35, 4),
        (0.4, 4),
        (0.5, 5),
        (1.0, 5),
    ];
    for (score, level) in table {
        let got = rouge_to_reward(score).map_err(|e| e.to_string())?;
        ensure(got == level, format!("{score} → {got}, expected {level}"))?;
    }
    for bad in [-0.01, 1.01, f64::NAN] {
        ensure(rouge_to_reward(bad).is_err(), format!("{bad} accepted"))?;
    }
    ensure(
        exact_match_reward(true) == 5 && exact_match_reward(false) == 1,
        "exact match mapping",
    )?;
    Ok(format!(
        "{} table points and 3 out-of-range inputs",
        table.len()
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut replays = 0;
    for (name, trace) in [
        ("linear", linear_trace(1200, 9)),
        ("heterogeneous", hetero_trace(1200, 9)),
    ] {
        let path = dir.path().join(format!("{name}.jsonl"));
        trace.write_jsonl(&path).map_err(|e| e.to_string())?;
        let reread = Trace::read_jsonl(&path, Default::default()).map_err(|e| e.to_string())?;
        let budget = derive_budget_regimes(&trace, 1200).unwrap()[1]
            .budget
            .clone();
        for policy in Policy::ALL {
            for seed in [0u64, 31] {
                let config = SchedulerConfig::new(1200, 8, budget.clone()).with_seed(seed);
                let runs: Vec<_> = [&trace, &trace, &reread]
                    .into_iter()
                    .map(|env| run_baseline(policy, env, &config).map(|r| r.ledger.decision_log))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                let bits = |log: &Vec<m2cmab::Decision>| -> Vec<(usize, usize, u64, Vec<u64>)> {
                    log.iter()
                        .map(|d| {
                            (
                                d.round,
                                d.action_id,
                                d.reward.to_bits(),
                                d.cost.as_slice().iter().map(|c| c.to_bits()).collect(),
                            )
                        })
                        .collect()
                };
                ensure(
                    bits(&runs[0]) == bits(&runs[1]) && bits(&runs[0]) == bits(&runs[2]),
                    format!("{name}/{}/seed {seed} diverged", policy.label()),
                )?;
                replays += 1;
            }
        }
    }
    Ok(format!("{replays} (trace, policy, seed) triples replayed bit-identically, including JSONL round trips"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("budget safety", budget_safety),
        ("formula conformance", formula_conformance),
        ("ridge oracle", ridge_oracle),
        ("LP oracle", lp_oracle),
        ("OMD conformance", omd_conformance),
        ("sublinear regret", sublinear_regret),
        ("policy ordering", ordering),
        ("initial-phase sensitivity", sensitivity),
        ("ablation", ablation),
        ("reward mapping", reward_mapping),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
