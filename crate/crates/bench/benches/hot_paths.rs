use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use m2cmab::experiment::RegimeName;
use m2cmab::scheduler::run_initial_phase;
use m2cmab::{hindsight_opt, run_full, SchedulerConfig};
use m2cmab_bench::{linear_trace, random_lp, regime_budget, scheduler_config};

fn lp_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("lp_solve");
    for rounds in [20, 60, 150] {
        let lp = random_lp(rounds, 5, 2, 7);
        group.bench_with_input(BenchmarkId::from_parameter(rounds), &lp, |b, lp| {
            b.iter(|| lp.solve().unwrap())
        });
    }
    group.finish();
}

fn hindsight(c: &mut Criterion) {
    let trace = linear_trace(2000, 1);
    let budget = regime_budget(&trace, 2000, RegimeName::Normal);
    c.bench_function("hindsight_opt/2000", |b| {
        b.iter(|| hindsight_opt(&trace, black_box(&budget), 2000).unwrap())
    });
}

fn ridge_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("ridge_fit");
    for t0 in [40, 200] {
        let trace = linear_trace(6 * t0 + 10, 2);
        let config = SchedulerConfig::new(
            trace.len(),
            t0,
            regime_budget(&trace, trace.len(), RegimeName::Generous),
        );
        let init = run_initial_phase(&trace, &config).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(init.history.len()),
            &init,
            |b, init| b.iter(|| init.bank.fit(&init.history, &init.actions).unwrap()),
        );
    }
    group.finish();
}

fn scheduler_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("scheduler");
    group.sample_size(10);
    for tasks in [500, 2000] {
        let trace = linear_trace(tasks, 3);
        let config = scheduler_config(&trace, RegimeName::Normal, 0);
        group.bench_with_input(BenchmarkId::from_parameter(tasks), &config, |b, config| {
            b.iter(|| run_full(&trace, config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lp_solve, hindsight, ridge_fit, scheduler_loop);
criterion_main!(benches);
