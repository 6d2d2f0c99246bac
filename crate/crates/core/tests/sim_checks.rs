use std::collections::HashMap;

use nasmine_core::model::{available_actions, build_model, ActionLabel, AttackParams, ChainState, HonestArrival, DEFAULT_MAX_STATES};
use nasmine_core::par::Exec;
use nasmine_core::revenue::{compute_errev, RevenueConfig};
use nasmine_core::sim::{simulate, simulate_replicas, transition_frequency_check, SimOptions};
use nasmine_core::strategy_file::StrategyFile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn always_mine(params: &AttackParams) -> HashMap<String, ActionLabel> {
    let model = build_model(params, DEFAULT_MAX_STATES).unwrap();
    model.states().iter().map(|s| (s.encode(), ActionLabel::Mine)).collect()
}

fn optimal(params: &AttackParams) -> HashMap<String, ActionLabel> {
    let model = build_model(params, DEFAULT_MAX_STATES).unwrap();
    let report = compute_errev(params, &RevenueConfig::default()).unwrap();
    StrategyFile::from_strategy(&model, &report.strategy).lookup().unwrap()
}

fn checked() -> SimOptions {
    SimOptions {
        check_conservation: true,
        ..SimOptions::default()
    }
}

#[test]
fn single_fork_mining_kernel() {
    let params = AttackParams::new(0.3, 0.5, 1, 1, 4).unwrap();
    let state: ChainState = "T:M;O:;C:0".parse().unwrap();
    let gap = transition_frequency_check(&params, &state, ActionLabel::Mine, 1_000_000, 1).unwrap();
    assert!(gap < 0.005, "{gap}");
}

#[test]
fn race_without_connectivity_is_always_lost() {
    for arrival in [HonestArrival::Pending, HonestArrival::Appended] {
        let params = AttackParams::new(0.3, 0.0, 2, 1, 4).unwrap().with_arrival(arrival);
        let (text, action) = match arrival {
            HonestArrival::Pending => ("T:H;O:H;C:1|0", ActionLabel::Release { i: 1, j: 1, k: 1 }),
            HonestArrival::Appended => ("T:H;O:H;C:0|1", ActionLabel::Release { i: 2, j: 1, k: 1 }),
        };
        let state: ChainState = text.parse().unwrap();
        assert!(available_actions(&state, &params).contains(&action));
        assert_eq!(transition_frequency_check(&params, &state, action, 10_000, 2).unwrap(), 0.0);
    }
}

#[test]
fn sampled_kernels_match_the_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for arrival in [HonestArrival::Pending, HonestArrival::Appended] {
        let params = AttackParams::new(0.35, 0.6, 2, 2, 3).unwrap().with_arrival(arrival);
        let model = build_model(&params, DEFAULT_MAX_STATES).unwrap();
        for _ in 0..40 {
            let state = model.state(rng.random_range(0..model.state_count()) as u32);
            let actions = available_actions(state, &params);
            let action = actions[rng.random_range(0..actions.len())];
            let gap = transition_frequency_check(&params, state, action, 40_000, rng.random()).unwrap();
            assert!(gap < 0.02, "{state} {action}: {gap}");
        }
    }
}

#[test]
fn without_resources_nothing_is_won() {
    let params = AttackParams::new(0.0, 0.5, 2, 1, 3).unwrap();
    let report = simulate(&params, &optimal(&AttackParams { p: 0.2, ..params }), 1_000_000, 3, checked(), None).unwrap();
    assert_eq!(report.finalized_adv, 0);
    assert!(report.finalized_hon > 0);
}

#[test]
fn never_releasing_wins_nothing() {
    let params = AttackParams::new(0.4, 1.0, 2, 2, 3).unwrap();
    let report = simulate(&params, &always_mine(&params), 1_000_000, 4, checked(), None).unwrap();
    assert_eq!(report.rel_revenue, Some(0.0));
}

#[test]
fn optimal_strategy_conserves_blocks_and_tracks_the_analysis() {
    for arrival in [HonestArrival::Pending, HonestArrival::Appended] {
        let params = AttackParams::new(0.3, 0.5, 2, 1, 3).unwrap().with_arrival(arrival);
        let expected = compute_errev(&params, &RevenueConfig::default()).unwrap().errev_lower;
        let report = simulate(&params, &optimal(&params), 2_000_000, 6, checked(), None).unwrap();
        let observed = report.rel_revenue.unwrap();
        let se = report.stderr.unwrap();
        assert!((observed - expected).abs() <= 4.0 * se + 1e-3, "{arrival:?}: {observed} vs {expected} (se {se})");
    }
}

#[test]
fn seeded_runs_repeat_and_streams_differ() {
    let params = AttackParams::new(0.3, 0.5, 1, 1, 3).unwrap();
    let strategy = optimal(&params);
    let a = simulate_replicas(&params, &strategy, 50_000, 9, 4, Exec::Parallel).unwrap();
    let b = simulate_replicas(&params, &strategy, 50_000, 9, 4, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].finalized_adv, a[1].finalized_adv);
}

#[test]
fn trace_records_every_finalization() {
    let params = AttackParams::new(0.3, 0.5, 1, 1, 3).unwrap();
    let mut buf = Vec::new();
    let report = simulate(&params, &optimal(&params), 5_000, 1, SimOptions::default(), Some(&mut buf)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let adv = text.lines().filter(|l| l.ends_with("\tA")).count() as u64;
    let hon = text.lines().filter(|l| l.ends_with("\tH")).count() as u64;
    assert_eq!((adv, hon), (report.finalized_adv, report.finalized_hon));
    assert!(text.lines().all(|l| l.split('\t').count() == 4));
}
