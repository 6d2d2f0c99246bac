use nasmine_core::model::{
    available_actions, build_model, mining_step_distribution, step_outcomes, tracked_blocks, ActionLabel, AttackParams, ChainState,
    HonestArrival, Owner, StateType, DEFAULT_MAX_STATES,
};
use nasmine_core::revenue::{compute_errev, RevenueConfig};
use proptest::prelude::*;

fn arb_state() -> impl Strategy<Value = ChainState> {
    (1usize..=4, 1usize..=3, 1u8..=12).prop_flat_map(|(d, f, l)| {
        (
            proptest::collection::vec(0..=l, d * f),
            proptest::collection::vec(prop_oneof![Just(Owner::Honest), Just(Owner::Adversary)], d - 1),
            prop_oneof![Just(StateType::Mining), Just(StateType::Honest), Just(StateType::Adversary)],
        )
            .prop_map(move |(forks, owners, kind)| ChainState::new(d, f, forks, owners, kind).unwrap())
    })
}

fn arb_params() -> impl Strategy<Value = AttackParams> {
    (
        0.0f64..=1.0,
        0.0f64..=1.0,
        1usize..=2,
        1usize..=2,
        1usize..=3,
        prop_oneof![Just(HonestArrival::Pending), Just(HonestArrival::Appended)],
    )
        .prop_map(|(p, g, d, f, l, arrival)| AttackParams::new(p, g, d, f, l).unwrap().with_arrival(arrival))
}

proptest! {
    #[test]
    fn encoding_round_trips(state in arb_state()) {
        let text = state.encode();
        prop_assert_eq!(text.parse::<ChainState>().unwrap(), state);
    }

    #[test]
    fn outcomes_are_distributions_with_consistent_accounting(params in arb_params(), pick in any::<prop::sample::Index>()) {
        let model = build_model(&params, DEFAULT_MAX_STATES).unwrap();
        let state = model.state(pick.index(model.state_count()) as u32);
        for action in available_actions(state, &params) {
            let outcomes = step_outcomes(state, action, &params).unwrap();
            let total: f64 = outcomes.iter().map(|o| o.prob).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            for o in &outcomes {
                prop_assert!(o.prob > 0.0 && o.prob <= 1.0);
                let finalized = o.reward_adv + o.reward_hon;
                prop_assert!(finalized as usize <= params.l + params.d);
                let flow = tracked_blocks(state, &params) as i64 + o.created as i64 - finalized as i64 - o.orphaned as i64;
                prop_assert_eq!(tracked_blocks(&o.state, &params) as i64, flow);
                match action {
                    ActionLabel::Mine => prop_assert!(finalized <= 1),
                    ActionLabel::Release { i, k, .. } if o.state.owners().first() == Some(&Owner::Adversary) || params.d == 1 && o.reward_adv > 0 => {
                        prop_assert_eq!(finalized as usize, k + 1 - i);
                    }
                    ActionLabel::Release { .. } => prop_assert!(finalized <= 1),
                }
            }
        }
    }

    #[test]
    fn action_labels_round_trip(params in arb_params(), pick in any::<prop::sample::Index>()) {
        let model = build_model(&params, DEFAULT_MAX_STATES).unwrap();
        let state = model.state(pick.index(model.state_count()) as u32);
        for action in available_actions(state, &params) {
            prop_assert_eq!(ActionLabel::from_id(action.id(&params), &params), Some(action));
            prop_assert_eq!(action.to_string().parse::<ActionLabel>().unwrap(), action);
        }
    }
}

#[test]
fn extreme_resources() {
    for arrival in [HonestArrival::Pending, HonestArrival::Appended] {
        let none = AttackParams::new(0.0, 0.5, 2, 2, 3).unwrap().with_arrival(arrival);
        let all = AttackParams { p: 1.0, ..none };
        let model = build_model(&AttackParams { p: 0.5, ..none }, DEFAULT_MAX_STATES).unwrap();
        for s in model.states().iter().filter(|s| s.kind() == StateType::Mining) {
            let out = mining_step_distribution(s, &none).unwrap();
            assert!(out.iter().all(|o| o.state.kind() == StateType::Honest));
            let out = mining_step_distribution(s, &all).unwrap();
            assert!(out.iter().all(|o| o.state.kind() == StateType::Adversary));
        }
    }
}

#[test]
fn equal_length_release_only_after_honest_block() {
    let params = AttackParams::new(0.3, 0.5, 2, 1, 4).unwrap().with_arrival(HonestArrival::Appended);
    let honest: ChainState = "T:H;O:H;C:0|1".parse().unwrap();
    let adversary: ChainState = "T:A;O:H;C:0|1".parse().unwrap();
    let race = ActionLabel::Release { i: 2, j: 1, k: 1 };
    assert!(available_actions(&honest, &params).contains(&race));
    assert!(!available_actions(&adversary, &params).contains(&race));
}

#[test]
fn literal_semantics_pin_single_fork_adversary_to_honest_rate() {
    // With the honest block appended before the adversary can answer, a
    // depth-one fork never survives an honest block, so no race is possible.
    let params = AttackParams::new(0.3, 1.0, 1, 1, 4).unwrap().with_arrival(HonestArrival::Appended);
    let report = compute_errev(&params, &RevenueConfig::default()).unwrap();
    assert!((report.errev_lower - 0.3).abs() <= 1e-4);
}

#[test]
fn builds_are_deterministic() {
    let params = AttackParams::new(0.25, 0.5, 2, 2, 2).unwrap();
    let a = build_model(&params, DEFAULT_MAX_STATES).unwrap();
    let b = build_model(&params, DEFAULT_MAX_STATES).unwrap();
    assert_eq!(a.states(), b.states());
    assert_eq!(a.mdp().all_transitions(), b.mdp().all_transitions());
}
