//! Monte Carlo simulation of the attack under a fixed strategy.
//!
//! The simulator tracks the public chain and the private forks by absolute
//! block height and applies the mining, release and race rules directly. It
//! does not read the transition tables of [`crate::model`]; the two only share
//! the state-encoding grammar used to look up the strategy.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{encode_parts, step_outcomes, ActionLabel, AttackParams, ChainState, HonestArrival, Owner, StateType};
use crate::par::{self, Exec};

/// Generator identity recorded in every report.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9) seed_from_u64(seed), set_stream(stream)";

const BATCHES: u64 = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("strategy has no entry for state {0}")]
    MissingState(String),
    #[error("strategy chooses {action}, which is not available in state {state}")]
    InvalidAction { state: String, action: String },
    #[error("block accounting broke at step {step}: {detail}")]
    Conservation { step: u64, detail: String },
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error("cannot write trace: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub steps: u64,
    pub finalized_adv: u64,
    pub finalized_hon: u64,
    pub orphaned: u64,
    pub created: u64,
    /// `None` when no block finalized.
    pub rel_revenue: Option<f64>,
    /// Batch-means standard error of `rel_revenue`.
    pub stderr: Option<f64>,
    pub batches: u64,
    pub seed: u64,
    pub stream: u64,
    pub generator: String,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    pub stream: u64,
    /// Reconcile created, finalized, orphaned and in-flight blocks after
    /// every step.
    pub check_conservation: bool,
}

#[derive(Clone, Debug)]
struct Fork {
    parent: u64,
    slot: usize,
    len: u32,
}

#[derive(Clone, Copy)]
enum Target {
    Extend(usize),
    Start { parent: u64, slot: usize },
}

#[derive(Clone)]
struct Chain {
    params: AttackParams,
    tip: u64,
    /// Public blocks that are not final yet, tip first.
    window: VecDeque<Owner>,
    forks: Vec<Fork>,
    pending: bool,
    kind: StateType,
    created: u64,
    finalized_adv: u64,
    finalized_hon: u64,
    orphaned: u64,
    events: Vec<Owner>,
    targets: Vec<Target>,
    matrix: Vec<u8>,
}

impl Chain {
    fn new(params: &AttackParams) -> Self {
        Self {
            params: *params,
            tip: params.d as u64 - 1,
            window: std::iter::repeat_n(Owner::Honest, params.d - 1).collect(),
            forks: Vec::new(),
            pending: false,
            kind: StateType::Mining,
            created: 0,
            finalized_adv: 0,
            finalized_hon: 0,
            orphaned: 0,
            events: Vec::new(),
            targets: Vec::new(),
            matrix: vec![0; params.d * params.f],
        }
    }

    fn from_state(params: &AttackParams, state: &ChainState) -> Result<Self, SimError> {
        if state.depth() != params.d || state.width() != params.f {
            return Err(SimError::Invalid(format!("state {state} does not match the parameters")));
        }
        let mut chain = Self::new(params);
        chain.tip += 8;
        chain.window = state.owners().iter().copied().collect();
        chain.kind = state.kind();
        chain.pending = params.arrival == HonestArrival::Pending && state.kind() == StateType::Honest;
        for (idx, &len) in state.forks().iter().enumerate() {
            if len > 0 {
                chain.forks.push(Fork {
                    parent: chain.tip - (idx / params.f) as u64,
                    slot: idx % params.f,
                    len: len as u32,
                });
            }
        }
        Ok(chain)
    }

    fn in_flight(&self) -> u64 {
        self.forks.iter().map(|f| f.len as u64).sum::<u64>() + self.window.len() as u64 + self.pending as u64
    }

    fn encode(&mut self, out: &mut String) {
        let f = self.params.f;
        self.matrix.fill(0);
        for fork in &self.forks {
            let row = (self.tip - fork.parent) as usize;
            self.matrix[row * f + fork.slot] = fork.len as u8;
        }
        encode_parts(self.kind, self.window.iter().copied(), &self.matrix, f, out);
    }

    fn finalize(&mut self, owner: Owner) {
        match owner {
            Owner::Adversary => self.finalized_adv += 1,
            Owner::Honest => self.finalized_hon += 1,
        }
        self.events.push(owner);
    }

    fn push_public(&mut self, owner: Owner) {
        self.tip += 1;
        self.window.push_front(owner);
        if self.window.len() >= self.params.d {
            let gone = self.window.pop_back().expect("window is non-empty");
            self.finalize(gone);
        }
    }

    /// Forks hanging below depth `d` can never be released again.
    fn prune(&mut self) {
        let lowest = self.tip + 1 - self.params.d as u64;
        let mut lost = 0;
        self.forks.retain(|f| {
            let keep = f.parent >= lowest && f.len > 0;
            if !keep {
                lost += f.len as u64;
            }
            keep
        });
        self.orphaned += lost;
    }

    fn append_honest(&mut self) {
        self.pending = false;
        self.push_public(Owner::Honest);
        self.prune();
    }

    fn mining_step(&mut self, rng: &mut ChaCha8Rng) {
        let (d, f, p) = (self.params.d, self.params.f, self.params.p);
        self.targets.clear();
        for r in 0..d as u64 {
            let parent = self.tip - r;
            let mut used = 0u64;
            for (idx, fork) in self.forks.iter().enumerate() {
                if fork.parent == parent {
                    used |= 1 << fork.slot;
                    self.targets.push(Target::Extend(idx));
                }
            }
            if let Some(slot) = (0..f).find(|&s| used & (1 << s) == 0) {
                self.targets.push(Target::Start { parent, slot });
            }
        }
        let sigma = self.targets.len() as f64;
        let denom = 1.0 - p + p * sigma;
        let honest = (1.0 - p) / denom;
        let u: f64 = rng.random();
        if u < honest {
            self.created += 1;
            self.kind = StateType::Honest;
            match self.params.arrival {
                HonestArrival::Pending => self.pending = true,
                HonestArrival::Appended => self.append_honest(),
            }
            return;
        }
        let pick = (((u - honest) / (p / denom)) as usize).min(self.targets.len() - 1);
        match self.targets[pick] {
            Target::Extend(idx) => {
                let fork = &mut self.forks[idx];
                if (fork.len as usize) < self.params.l {
                    fork.len += 1;
                    self.created += 1;
                }
            }
            Target::Start { parent, slot } => {
                self.forks.push(Fork { parent, slot, len: 1 });
                self.created += 1;
            }
        }
        self.kind = StateType::Adversary;
    }

    fn release(&mut self, i: usize, j: usize, k: usize, rng: &mut ChaCha8Rng) -> bool {
        let (d, f) = (self.params.d, self.params.f);
        if i == 0 || i > d || j == 0 || j > f || k == 0 {
            return false;
        }
        let min_k = match (self.kind, self.params.arrival) {
            (StateType::Mining, _) => return false,
            (StateType::Honest, HonestArrival::Appended) => (i - 1).max(1),
            _ => i,
        };
        let parent = self.tip - (i as u64 - 1);
        let Some(idx) = self.forks.iter().position(|fk| fk.parent == parent && fk.slot == j - 1) else {
            return false;
        };
        if k < min_k || k > self.forks[idx].len as usize {
            return false;
        }

        // Equal length with the chain honest miners extend: they switch
        // with probability gamma.
        let lead = k + 1 - i;
        let race = match (self.kind, self.params.arrival) {
            (StateType::Honest, HonestArrival::Appended) => lead == 0,
            (StateType::Honest, HonestArrival::Pending) => lead == 1,
            _ => false,
        };
        self.kind = StateType::Mining;
        if race && rng.random::<f64>() >= self.params.gamma {
            if self.pending {
                self.append_honest();
            }
            return true;
        }

        let fork = self.forks.swap_remove(idx);
        for _ in 1..i {
            self.window.pop_front();
            self.orphaned += 1;
        }
        if self.pending {
            self.pending = false;
            self.orphaned += 1;
        }
        let mut lost = 0;
        self.forks.retain(|fk| {
            if fk.parent > parent {
                lost += fk.len as u64;
                false
            } else {
                true
            }
        });
        self.orphaned += lost;
        self.tip = parent;
        for _ in 0..k {
            self.push_public(Owner::Adversary);
        }
        let tail = fork.len - k as u32;
        if tail > 0 {
            self.forks.push(Fork {
                parent: self.tip,
                slot: 0,
                len: tail,
            });
        }
        self.prune();
        true
    }

    /// Applies one action; returns false if it is not available.
    fn apply(&mut self, action: ActionLabel, rng: &mut ChaCha8Rng) -> bool {
        self.events.clear();
        match action {
            ActionLabel::Mine => {
                match self.kind {
                    StateType::Mining => self.mining_step(rng),
                    _ => {
                        if self.pending {
                            self.append_honest();
                        }
                        self.kind = StateType::Mining;
                    }
                }
                true
            }
            ActionLabel::Release { i, j, k } => self.release(i, j, k, rng),
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `steps` steps from the initial state, choosing actions from
/// `strategy` (keyed by encoded state).
pub fn simulate(
    params: &AttackParams,
    strategy: &HashMap<String, ActionLabel>,
    steps: u64,
    seed: u64,
    options: SimOptions,
    mut trace: Option<&mut dyn Write>,
) -> Result<SimReport, SimError> {
    params.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
    if steps == 0 {
        return Err(SimError::Invalid("steps must be at least 1".into()));
    }
    if params.f > 64 {
        return Err(SimError::Invalid("the simulator supports at most 64 forks per block".into()));
    }
    let mut rng = rng_for(seed, options.stream);
    let mut chain = Chain::new(params);
    let start_blocks = chain.in_flight();
    let batches = BATCHES.min(steps);
    let mut batch_adv = vec![0u64; batches as usize];
    let mut batch_hon = vec![0u64; batches as usize];
    let mut key = String::new();

    for step in 0..steps {
        key.clear();
        chain.encode(&mut key);
        let action = *strategy.get(key.as_str()).ok_or_else(|| SimError::MissingState(key.clone()))?;
        let (adv_before, hon_before) = (chain.finalized_adv, chain.finalized_hon);
        if !chain.apply(action, &mut rng) {
            return Err(SimError::InvalidAction {
                state: key.clone(),
                action: action.to_string(),
            });
        }
        let b = (step as u128 * batches as u128 / steps as u128) as usize;
        batch_adv[b] += chain.finalized_adv - adv_before;
        batch_hon[b] += chain.finalized_hon - hon_before;
        if let Some(w) = trace.as_mut() {
            for owner in &chain.events {
                let who = if *owner == Owner::Adversary { 'A' } else { 'H' };
                writeln!(w, "{step}\t{key}\tfinalize\t{who}")?;
            }
        }
        if options.check_conservation {
            let expected = start_blocks + chain.created;
            let accounted = chain.in_flight() + chain.finalized_adv + chain.finalized_hon + chain.orphaned;
            if expected != accounted {
                return Err(SimError::Conservation {
                    step,
                    detail: format!("{expected} blocks created, {accounted} accounted for"),
                });
            }
        }
    }

    let total = chain.finalized_adv + chain.finalized_hon;
    let rel_revenue = (total > 0).then(|| chain.finalized_adv as f64 / total as f64);
    let stderr = rel_revenue.and_then(|r| batch_stderr(&batch_adv, &batch_hon, r));
    Ok(SimReport {
        steps,
        finalized_adv: chain.finalized_adv,
        finalized_hon: chain.finalized_hon,
        orphaned: chain.orphaned,
        created: chain.created,
        rel_revenue,
        stderr,
        batches,
        seed,
        stream: options.stream,
        generator: GENERATOR.to_string(),
    })
}

/// Standard error of a ratio estimator from per-batch numerators and
/// denominators.
fn batch_stderr(adv: &[u64], hon: &[u64], ratio: f64) -> Option<f64> {
    let b = adv.len();
    if b < 2 {
        return None;
    }
    let mean_total = adv.iter().zip(hon).map(|(a, h)| (a + h) as f64).sum::<f64>() / b as f64;
    if mean_total == 0.0 {
        return None;
    }
    let ss: f64 = adv
        .iter()
        .zip(hon)
        .map(|(&a, &h)| {
            let z = a as f64 - ratio * (a + h) as f64;
            z * z
        })
        .sum();
    Some((ss / (b * (b - 1)) as f64).sqrt() / mean_total)
}

/// Independent replicas on streams `0..count` of the same seed.
pub fn simulate_replicas(
    params: &AttackParams,
    strategy: &HashMap<String, ActionLabel>,
    steps: u64,
    seed: u64,
    count: u64,
    exec: Exec,
) -> Result<Vec<SimReport>, SimError> {
    par::map_range(count as usize, exec, |stream| {
        let options = SimOptions {
            stream: stream as u64,
            check_conservation: false,
        };
        simulate(params, strategy, steps, seed, options, None)
    })
    .into_iter()
    .collect()
}

/// Samples the simulator's one-step kernel from `state` and returns the
/// largest gap between observed successor frequencies and the model's
/// declared probabilities.
pub fn transition_frequency_check(
    params: &AttackParams,
    state: &ChainState,
    action: ActionLabel,
    samples: u64,
    seed: u64,
) -> Result<f64, SimError> {
    let declared = step_outcomes(state, action, params).map_err(|e| SimError::Invalid(e.to_string()))?;
    let mut expected: HashMap<String, f64> = HashMap::new();
    for o in declared {
        *expected.entry(o.state.encode()).or_default() += o.prob;
    }

    let base = Chain::from_state(params, state)?;
    let mut rng = rng_for(seed, 0);
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut key = String::new();
    for _ in 0..samples {
        let mut chain = base.clone();
        if !chain.apply(action, &mut rng) {
            return Err(SimError::InvalidAction {
                state: state.encode(),
                action: action.to_string(),
            });
        }
        key.clear();
        chain.encode(&mut key);
        *counts.entry(key.clone()).or_default() += 1;
    }

    let mut worst = 0.0f64;
    for (k, &prob) in &expected {
        let seen = counts.get(k).copied().unwrap_or(0) as f64 / samples as f64;
        worst = worst.max((seen - prob).abs());
    }
    for (k, &n) in &counts {
        if !expected.contains_key(k) {
            worst = worst.max(n as f64 / samples as f64);
        }
    }
    Ok(worst)
}
