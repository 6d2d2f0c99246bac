//! Finite MDPs with sparse transitions.
//!
//! Every transition carries two integer reward components: the number of
//! adversary blocks and the number of honest blocks that become final when the
//! transition fires. Keeping them apart lets one built model be re-scalarized
//! for any trade-off weight `beta` without rebuilding.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

/// Dense index of a state.
pub type StateId = u32;

/// Dense action identifier. Its meaning is owned by whoever built the MDP.
pub type ActionId = u32;

/// Probability mass on one stochastic row must sum to one within this bound.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("state {state} has no available actions")]
    NoActions { state: StateId },
    #[error("actions of state {state} are not strictly increasing")]
    UnorderedActions { state: StateId },
    #[error("state {state}, action {action}: successor {target} out of range")]
    BadTarget {
        state: StateId,
        action: ActionId,
        target: StateId,
    },
    #[error("state {state}, action {action}: invalid probability {prob}")]
    BadProbability {
        state: StateId,
        action: ActionId,
        prob: f64,
    },
    #[error("state {state}, action {action}: probabilities sum to {sum}")]
    NotStochastic {
        state: StateId,
        action: ActionId,
        sum: f64,
    },
    #[error("initial state {0} out of range")]
    BadInitial(StateId),
    #[error("empty model")]
    Empty,
    #[error("strategy covers {got} states, model has {expected}")]
    StrategyLength { expected: usize, got: usize },
    #[error("strategy picks action {action} in state {state}, which is not available there")]
    UnavailableAction { state: StateId, action: ActionId },
    #[error("beta = {0} is outside [0, 1]")]
    BetaOutOfRange(f64),
}

/// One probabilistic outcome of a state-action pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub target: StateId,
    pub prob: f64,
    /// Adversary blocks finalized by this outcome.
    pub reward_adv: u32,
    /// Honest blocks finalized by this outcome.
    pub reward_hon: u32,
}

impl Transition {
    pub fn new(target: StateId, prob: f64, reward_adv: u32, reward_hon: u32) -> Self {
        Self {
            target,
            prob,
            reward_adv,
            reward_hon,
        }
    }

    /// `reward_adv * (1 - beta) - reward_hon * beta`.
    #[inline]
    pub fn scalar_reward(&self, beta: f64) -> f64 {
        self.reward_adv as f64 * (1.0 - beta) - self.reward_hon as f64 * beta
    }
}

/// Immutable sparse MDP. States are `0..state_count()`, each with a non-empty,
/// strictly increasing list of action ids. Internally every (state, action)
/// pair owns a *slot*; slots of one state are contiguous.
#[derive(Clone, Debug)]
pub struct SparseMdp {
    initial: StateId,
    slot_offsets: Vec<usize>,
    slot_actions: Vec<ActionId>,
    trans_offsets: Vec<usize>,
    transitions: Vec<Transition>,
}

impl SparseMdp {
    pub fn state_count(&self) -> usize {
        self.slot_offsets.len() - 1
    }

    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    pub fn slot_count(&self) -> usize {
        self.slot_actions.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    /// Available actions of `state`, in increasing id order.
    pub fn actions(&self, state: StateId) -> &[ActionId] {
        &self.slot_actions[self.slots(state)]
    }

    /// Slot range of `state`.
    #[inline]
    pub fn slots(&self, state: StateId) -> Range<usize> {
        let s = state as usize;
        self.slot_offsets[s]..self.slot_offsets[s + 1]
    }

    #[inline]
    pub fn slot_action(&self, slot: usize) -> ActionId {
        self.slot_actions[slot]
    }

    #[inline]
    pub fn slot_transitions(&self, slot: usize) -> &[Transition] {
        &self.transitions[self.trans_offsets[slot]..self.trans_offsets[slot + 1]]
    }

    /// Index range of a slot's transitions inside [`SparseMdp::all_transitions`].
    #[inline]
    pub fn slot_transition_range(&self, slot: usize) -> Range<usize> {
        self.trans_offsets[slot]..self.trans_offsets[slot + 1]
    }

    pub fn slot_of(&self, state: StateId, action: ActionId) -> Option<usize> {
        let range = self.slots(state);
        let start = range.start;
        self.slot_actions[range]
            .binary_search(&action)
            .ok()
            .map(|k| start + k)
    }

    pub fn transitions(&self, state: StateId, action: ActionId) -> Option<&[Transition]> {
        self.slot_of(state, action)
            .map(|slot| self.slot_transitions(slot))
    }

    /// Flat view of every transition; scalarized reward vectors align with it.
    pub fn all_transitions(&self) -> &[Transition] {
        &self.transitions
    }
}

/// Incremental constructor. States are appended in id order.
#[derive(Debug, Default)]
pub struct MdpBuilder {
    slot_offsets: Vec<usize>,
    slot_actions: Vec<ActionId>,
    trans_offsets: Vec<usize>,
    transitions: Vec<Transition>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self {
            slot_offsets: vec![0],
            slot_actions: Vec::new(),
            trans_offsets: vec![0],
            transitions: Vec::new(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.slot_offsets.len() - 1
    }

    /// Appends the next state with its actions. Outcomes with identical target
    /// and reward components are merged; zero-probability outcomes are dropped.
    pub fn push_state<I, T>(&mut self, actions: I) -> StateId
    where
        I: IntoIterator<Item = (ActionId, T)>,
        T: IntoIterator<Item = Transition>,
    {
        let id = self.state_count() as StateId;
        for (action, outcomes) in actions {
            self.slot_actions.push(action);
            let start = self.transitions.len();
            for t in outcomes {
                if t.prob == 0.0 {
                    continue;
                }
                let row = &mut self.transitions[start..];
                if let Some(existing) = row.iter_mut().find(|e| {
                    e.target == t.target
                        && e.reward_adv == t.reward_adv
                        && e.reward_hon == t.reward_hon
                }) {
                    existing.prob += t.prob;
                } else {
                    self.transitions.push(t);
                }
            }
            self.trans_offsets.push(self.transitions.len());
        }
        self.slot_offsets.push(self.slot_actions.len());
        id
    }

    pub fn build(self, initial: StateId) -> Result<SparseMdp, MdpError> {
        let mdp = SparseMdp {
            initial,
            slot_offsets: self.slot_offsets,
            slot_actions: self.slot_actions,
            trans_offsets: self.trans_offsets,
            transitions: self.transitions,
        };
        validate(&mdp)?;
        Ok(mdp)
    }
}

fn validate(mdp: &SparseMdp) -> Result<(), MdpError> {
    let n = mdp.state_count();
    if n == 0 {
        return Err(MdpError::Empty);
    }
    if mdp.initial as usize >= n {
        return Err(MdpError::BadInitial(mdp.initial));
    }
    for s in 0..n as StateId {
        let actions = mdp.actions(s);
        if actions.is_empty() {
            return Err(MdpError::NoActions { state: s });
        }
        if actions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MdpError::UnorderedActions { state: s });
        }
        for slot in mdp.slots(s) {
            let action = mdp.slot_action(slot);
            check_row(s, action, mdp.slot_transitions(slot), n)?;
        }
    }
    Ok(())
}

fn check_row(state: StateId, action: ActionId, row: &[Transition], n: usize) -> Result<(), MdpError> {
    let mut sum = 0.0;
    for t in row {
        if !(t.prob.is_finite() && t.prob >= 0.0 && t.prob <= 1.0 + STOCHASTIC_TOLERANCE) {
            return Err(MdpError::BadProbability {
                state,
                action,
                prob: t.prob,
            });
        }
        if t.target as usize >= n {
            return Err(MdpError::BadTarget {
                state,
                action,
                target: t.target,
            });
        }
        sum += t.prob;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(MdpError::NotStochastic { state, action, sum });
    }
    Ok(())
}

/// A memoryless deterministic strategy: one action id per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PositionalStrategy(Vec<ActionId>);

impl PositionalStrategy {
    pub fn new(choices: Vec<ActionId>) -> Self {
        Self(choices)
    }

    /// Picks the lowest action id everywhere.
    pub fn first_actions(mdp: &SparseMdp) -> Self {
        Self(
            (0..mdp.state_count() as StateId)
                .map(|s| mdp.actions(s)[0])
                .collect(),
        )
    }

    pub fn action(&self, state: StateId) -> ActionId {
        self.0[state as usize]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[ActionId] {
        &self.0
    }

    /// Resolves every choice to its slot, failing on the first unavailable one.
    pub fn slots(&self, mdp: &SparseMdp) -> Result<Vec<usize>, MdpError> {
        if self.0.len() != mdp.state_count() {
            return Err(MdpError::StrategyLength {
                expected: mdp.state_count(),
                got: self.0.len(),
            });
        }
        self.0
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                mdp.slot_of(s as StateId, a)
                    .ok_or(MdpError::UnavailableAction {
                        state: s as StateId,
                        action: a,
                    })
            })
            .collect()
    }

    pub fn validate(&self, mdp: &SparseMdp) -> Result<(), MdpError> {
        self.slots(mdp).map(|_| ())
    }

    pub(crate) fn from_slots(mdp: &SparseMdp, slots: &[usize]) -> Self {
        Self(slots.iter().map(|&k| mdp.slot_action(k)).collect())
    }
}

/// Markov chain obtained by fixing a positional strategy, or built directly.
#[derive(Clone, Debug)]
pub struct InducedChain {
    initial: StateId,
    offsets: Vec<usize>,
    transitions: Vec<Transition>,
}

impl InducedChain {
    /// Builds a chain from explicit rows, merging duplicate outcomes like
    /// [`MdpBuilder::push_state`] does.
    pub fn from_rows(initial: StateId, rows: Vec<Vec<Transition>>) -> Result<Self, MdpError> {
        let mut builder = MdpBuilder::new();
        for row in rows {
            builder.push_state(std::iter::once((0, row)));
        }
        let mdp = builder.build(initial)?;
        Ok(Self {
            initial,
            offsets: mdp.trans_offsets,
            transitions: mdp.transitions,
        })
    }

    pub fn state_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    #[inline]
    pub fn row(&self, state: StateId) -> &[Transition] {
        let s = state as usize;
        &self.transitions[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Transition]> + '_ {
        (0..self.state_count() as StateId).map(move |s| self.row(s))
    }
}

/// Fixes `strategy` in `mdp`. Rows are copied bit-exactly.
pub fn induce_chain(mdp: &SparseMdp, strategy: &PositionalStrategy) -> Result<InducedChain, MdpError> {
    let slots = strategy.slots(mdp)?;
    let mut offsets = Vec::with_capacity(slots.len() + 1);
    let mut transitions = Vec::new();
    offsets.push(0);
    for &slot in &slots {
        transitions.extend_from_slice(mdp.slot_transitions(slot));
        offsets.push(transitions.len());
    }
    Ok(InducedChain {
        initial: mdp.initial_state(),
        offsets,
        transitions,
    })
}

/// Per-transition scalar reward `r_beta`, aligned with [`SparseMdp::all_transitions`].
pub fn scalarize_reward(mdp: &SparseMdp, beta: f64) -> Result<Vec<f64>, MdpError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(MdpError::BetaOutOfRange(beta));
    }
    Ok(mdp
        .all_transitions()
        .iter()
        .map(|t| t.scalar_reward(beta))
        .collect())
}

impl fmt::Display for SparseMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SparseMdp({} states, {} actions, {} transitions)",
            self.state_count(),
            self.slot_count(),
            self.transition_count()
        )
    }
}
