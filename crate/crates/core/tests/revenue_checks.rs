use nasmine_core::baselines::{build_single_tree_chain, honest_errev, single_tree_errev, tree_step, TreeParams, TreeState};
use nasmine_core::model::{build_model, AttackParams, HonestArrival, DEFAULT_MAX_STATES};
use nasmine_core::revenue::{compute_errev, errev_for_model, exact_errev, mp_at_beta, RevenueConfig};
use nasmine_core::solver::SolverConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn ours(p: f64, gamma: f64, d: usize, f: usize, l: usize) -> f64 {
    let params = AttackParams::new(p, gamma, d, f, l).unwrap();
    compute_errev(&params, &RevenueConfig::default().with_epsilon(EPS)).unwrap().errev_lower
}

fn grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 * 0.05).collect()
}

#[test]
fn ours_is_monotone_and_above_honest() {
    for (d, f) in [(1, 1), (2, 1)] {
        for gamma in [0.0, 0.5, 1.0] {
            let values: Vec<f64> = grid().iter().map(|&p| ours(p, gamma, d, f, 3)).collect();
            for (p, v) in grid().iter().zip(&values) {
                assert!(*v >= p - EPS && *v <= 1.0, "d={d} f={f} gamma={gamma} p={p}: {v}");
            }
            for w in values.windows(2) {
                assert!(w[1] >= w[0] - 2.0 * EPS, "d={d} f={f} gamma={gamma}: {values:?}");
            }
        }
    }
}

#[test]
fn ours_is_monotone_in_gamma() {
    for p in [0.1, 0.25, 0.4] {
        let values: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&g| ours(p, g, 2, 1, 3)).collect();
        for w in values.windows(2) {
            assert!(w[1] >= w[0] - 2.0 * EPS, "p={p}: {values:?}");
        }
    }
}

#[test]
fn returned_strategy_sits_inside_the_bracket() {
    for arrival in [HonestArrival::Pending, HonestArrival::Appended] {
        let params = AttackParams::new(0.3, 0.5, 2, 1, 3).unwrap().with_arrival(arrival);
        let model = build_model(&params, DEFAULT_MAX_STATES).unwrap();
        let report = errev_for_model(&model, &RevenueConfig::default().with_epsilon(EPS)).unwrap();
        let exact = exact_errev(model.mdp(), &report.strategy, 1e-10).unwrap();
        assert!(exact >= report.errev_lower - 1e-9 && exact <= report.errev_lower + EPS + 1e-9);
        for pt in &report.beta_trace {
            if pt.beta <= report.errev_lower {
                assert!(pt.mp >= -1e-9);
            } else {
                assert!(pt.mp <= 1e-9);
            }
        }
    }
}

#[test]
fn payoff_signs_at_the_ends() {
    let model = build_model(&AttackParams::new(0.2, 0.5, 2, 1, 2).unwrap(), DEFAULT_MAX_STATES).unwrap();
    let config = SolverConfig::default();
    assert!(mp_at_beta(model.mdp(), 0.0, &config).unwrap().gain >= 0.0);
    assert!(mp_at_beta(model.mdp(), 1.0, &config).unwrap().gain <= 0.0);
}

#[test]
fn tree_baseline_is_monotone_and_bounded_by_ours() {
    for gamma in [0.0, 0.5, 1.0] {
        let values: Vec<f64> = grid()
            .iter()
            .map(|&p| single_tree_errev(&TreeParams::new(p, gamma, 3, 2).unwrap(), 1e-10).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "gamma={gamma}: {values:?}");
        }
        for v in &values {
            assert!((0.0..=1.0).contains(v));
        }
    }
    for p in [0.1, 0.3] {
        let values: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&g| single_tree_errev(&TreeParams::new(p, g, 3, 2).unwrap(), 1e-10).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-9), "p={p}: {values:?}");
    }
    let tree = single_tree_errev(&TreeParams::new(0.3, 0.5, 4, 2).unwrap(), 1e-10).unwrap();
    assert!(tree <= ours(0.3, 0.5, 2, 2, 4) + EPS);
}

#[test]
fn tree_chain_respects_its_bound() {
    let params = TreeParams::new(0.3, 0.5, 4, 3).unwrap();
    let (chain, states) = build_single_tree_chain(&params).unwrap();
    assert_eq!(chain.state_count(), states.len());
    assert!(states.len() as f64 <= params.state_bound());
}

#[test]
fn tree_trajectories_conserve_blocks() {
    let params = TreeParams::new(0.4, 0.5, 4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut state = TreeState::empty(params.depth);
    let (mut created, mut finalized, mut orphaned) = (0u64, 0u64, 0u64);
    // Honest blocks mined since the fork point stay in flight until it settles.
    for _ in 0..50_000 {
        let outcomes = tree_step(&state, &params);
        let total: f64 = outcomes.iter().map(|o| o.prob).sum();
        assert!((total - 1.0).abs() <= 1e-12);
        let mut u = rng.random::<f64>() * total;
        let pick = outcomes
            .iter()
            .find(|o| {
                u -= o.prob;
                u <= 0.0
            })
            .unwrap_or(outcomes.last().unwrap());
        created += pick.created as u64;
        finalized += (pick.reward_adv + pick.reward_hon) as u64;
        orphaned += pick.orphaned as u64;
        state = pick.state.clone();
        let in_flight = state.tree_blocks() as u64 + state.honest_since_fork() as u64;
        assert_eq!(created, finalized + orphaned + in_flight);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn honest_is_identity(p in 0.0f64..=1.0) {
        prop_assert_eq!(honest_errev(p).unwrap(), p);
    }

    #[test]
    fn single_fork_strategy_never_loses(p in 0.01f64..=0.45, gamma in 0.0f64..=1.0) {
        let v = ours(p, gamma, 1, 1, 2);
        prop_assert!(v >= p - EPS && v <= 1.0);
    }
}
