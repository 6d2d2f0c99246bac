use std::collections::HashMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nasmine_core::mdp::scalarize_reward;
use nasmine_core::model::{build_model, ActionLabel, AttackParams, DEFAULT_MAX_STATES};
use nasmine_core::par::Exec;
use nasmine_core::revenue::{compute_errev, RevenueConfig};
use nasmine_core::sim::simulate_replicas;
use nasmine_core::solver::{solve_mean_payoff, SolverConfig};
use nasmine_core::strategy_file::StrategyFile;
use nasmine_core::sweep::{run_sweep, AttackKind, SweepSpec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn solve(c: &mut Criterion) {
    let params = AttackParams::new(0.3, 0.5, 2, 2, 4).unwrap();
    let model = build_model(&params, DEFAULT_MAX_STATES).unwrap();
    let rewards = scalarize_reward(model.mdp(), 0.4).unwrap();
    let mut group = c.benchmark_group("solve_d2_f2");
    group.sample_size(10);
    for (name, exec) in MODES {
        let config = SolverConfig::default().with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_mean_payoff(black_box(model.mdp()), &rewards, &config).unwrap().gain)
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let spec = SweepSpec::new(AttackKind::Ours, vec![0.1, 0.2, 0.3], vec![0.0, 0.5, 1.0], 2, 1, 4);
    let mut group = c.benchmark_group("sweep_3x3_d2_f1");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_sweep(black_box(&spec), exec).len()));
    }
    group.finish();
}

fn replicas(c: &mut Criterion) {
    let params = AttackParams::new(0.3, 0.5, 2, 1, 4).unwrap();
    let model = build_model(&params, DEFAULT_MAX_STATES).unwrap();
    let report = compute_errev(&params, &RevenueConfig::default()).unwrap();
    let lookup: HashMap<String, ActionLabel> = StrategyFile::from_strategy(&model, &report.strategy).lookup().unwrap();
    let mut group = c.benchmark_group("simulate_8x100k");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_replicas(&params, &lookup, 100_000, 1, 8, exec).unwrap().len())
        });
    }
    group.finish();
}

criterion_group!(benches, solve, sweep, replicas);
criterion_main!(benches);
