//! Reference attacks: honest mining and selfish mining with one private tree.

use std::collections::HashMap;

use thiserror::Error;

use crate::mdp::{InducedChain, MdpError, StateId, Transition};
use crate::revenue::{gain_ratio, RevenueError};
use crate::solver::chain_gains;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Revenue(#[from] RevenueError),
}

/// Relative revenue of honest mining: every main-chain block is the
/// adversary's with probability `p`.
pub fn honest_errev(p: f64) -> Result<f64, BaselineError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BaselineError::InvalidParams(format!("p = {p} is not in [0, 1]")));
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub p: f64,
    pub gamma: f64,
    /// Maximal tree depth.
    pub depth: usize,
    /// Maximal number of tree blocks at one depth.
    pub width: usize,
}

impl TreeParams {
    pub fn new(p: f64, gamma: f64, depth: usize, width: usize) -> Result<Self, BaselineError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(p) || !unit(gamma) {
            return Err(BaselineError::InvalidParams(format!("p = {p} and gamma = {gamma} must lie in [0, 1]")));
        }
        if depth == 0 || width == 0 || width > u8::MAX as usize {
            return Err(BaselineError::InvalidParams(format!("depth = {depth} and width = {width} are out of range")));
        }
        Ok(Self { p, gamma, depth, width })
    }

    /// `(width + 1)^depth (depth + 1)`.
    pub fn state_bound(&self) -> f64 {
        ((self.width + 1) as f64).powi(self.depth as i32) * (self.depth + 1) as f64
    }
}

/// Private tree summarized by its block count per depth, plus the lead of
/// the tree over the honest blocks mined since the fork point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeState {
    pub profile: Vec<u8>,
    pub lead: usize,
}

impl TreeState {
    pub fn empty(depth: usize) -> Self {
        Self {
            profile: vec![0; depth],
            lead: 0,
        }
    }

    /// Depth of the deepest tree block.
    pub fn tree_depth(&self) -> usize {
        self.profile.iter().take_while(|&&x| x > 0).count()
    }

    pub fn tree_blocks(&self) -> u32 {
        self.profile.iter().map(|&x| x as u32).sum()
    }

    /// Honest blocks mined since the fork point.
    pub fn honest_since_fork(&self) -> usize {
        self.tree_depth() - self.lead
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeOutcome {
    pub state: TreeState,
    pub prob: f64,
    pub reward_adv: u32,
    pub reward_hon: u32,
    pub created: u32,
    pub orphaned: u32,
}

/// Successors of a tree state. Outcomes are not merged.
pub fn tree_step(state: &TreeState, params: &TreeParams) -> Vec<TreeOutcome> {
    let (p, l, f) = (params.p, params.depth, params.width as u8);
    let total = state.tree_blocks();
    let denom = 1.0 - p + p * (1.0 + total as f64);
    let mut out = Vec::with_capacity(l + 2);

    // Adversary: a new block at depth 1 (weight p) or on top of any block
    // at depth i (weight p per block). Blocks beyond the caps are lost.
    let depth = state.tree_depth();
    for i in 0..l.min(depth + 1) {
        let weight = if i == 0 { 1.0 } else { state.profile[i - 1] as f64 };
        if weight == 0.0 || p == 0.0 {
            continue;
        }
        let mut next = state.clone();
        let created = if next.profile[i] < f {
            next.profile[i] += 1;
            if i == depth {
                next.lead += 1;
            }
            1
        } else {
            0
        };
        out.push(TreeOutcome {
            state: next,
            prob: p * weight / denom,
            reward_adv: 0,
            reward_hon: 0,
            created,
            orphaned: 0,
        });
    }
    if depth == l && p > 0.0 {
        // Extensions of the deepest level would exceed the depth cap.
        out.push(TreeOutcome {
            state: state.clone(),
            prob: p * state.profile[l - 1] as f64 / denom,
            reward_adv: 0,
            reward_hon: 0,
            created: 0,
            orphaned: 0,
        });
    }

    let honest = (1.0 - p) / denom;
    if honest > 0.0 {
        let h = state.honest_since_fork() as u32;
        let d = depth as u32;
        let reset = TreeState::empty(l);
        let settle = |state, prob, reward_adv, reward_hon, orphaned| TreeOutcome {
            state,
            prob,
            reward_adv,
            reward_hon,
            created: 1,
            orphaned,
        };
        match state.lead {
            // No fork: the honest block finalizes at once.
            0 => out.push(settle(reset, honest, 0, 1, 0)),
            // Tie: the adversary publishes its longest path and races.
            1 => {
                let (win, lose) = (honest * params.gamma, honest * (1.0 - params.gamma));
                if win > 0.0 {
                    out.push(settle(reset.clone(), win, d, 0, h + 1 + (total - d)));
                }
                if lose > 0.0 {
                    out.push(settle(reset, lose, 0, h + 1, total));
                }
            }
            // The honest chain comes within one block: publish and win.
            2 => out.push(settle(reset, honest, d, 0, h + 1 + (total - d))),
            _ => {
                let mut next = state.clone();
                next.lead -= 1;
                out.push(settle(next, honest, 0, 0, 0));
            }
        }
    }
    out
}

/// The single-tree attack as a Markov chain over the states reachable from
/// the empty tree, in breadth-first order.
pub fn build_single_tree_chain(params: &TreeParams) -> Result<(InducedChain, Vec<TreeState>), BaselineError> {
    let start = TreeState::empty(params.depth);
    let mut states = vec![start.clone()];
    let mut index = HashMap::from([(start, 0 as StateId)]);
    let mut rows = Vec::new();
    let mut next = 0;
    while next < states.len() {
        let state = states[next].clone();
        next += 1;
        let mut row: Vec<Transition> = Vec::new();
        for o in tree_step(&state, params) {
            let target = *index.entry(o.state.clone()).or_insert_with(|| {
                states.push(o.state);
                (states.len() - 1) as StateId
            });
            match row
                .iter_mut()
                .find(|t| t.target == target && t.reward_adv == o.reward_adv && t.reward_hon == o.reward_hon)
            {
                Some(t) => t.prob += o.prob,
                None => row.push(Transition::new(target, o.prob, o.reward_adv, o.reward_hon)),
            }
        }
        rows.push(row);
    }
    Ok((InducedChain::from_rows(0, rows)?, states))
}

/// Long-run relative revenue of the single-tree attack.
pub fn single_tree_errev(params: &TreeParams, tolerance: f64) -> Result<f64, BaselineError> {
    if params.p == 0.0 {
        return Ok(0.0);
    }
    let (chain, _) = build_single_tree_chain(params)?;
    let gains = chain_gains(&chain, tolerance).map_err(RevenueError::from)?;
    Ok(gain_ratio(gains, tolerance)?)
}
