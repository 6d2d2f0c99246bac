//! The selfish-mining MDP.
//!
//! A state is a triple `(C, O, type)`: `C` is a `d x f` matrix of private fork
//! lengths (row 0 holds the forks on the public tip), `O` records the owners of
//! the public blocks at depths `1..d-1` (tip first), and `type` says who moved
//! last. A public block finalizes once it leaves the `O` window.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{ActionId, MdpBuilder, MdpError, SparseMdp, StateId, Transition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("estimated state count {estimate:.3e} exceeds the cap of {cap}")]
    ResourceCap { estimate: f64, cap: usize },
    #[error("action {action} is not available in state {state}")]
    Unavailable { state: String, action: String },
    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// When an honest block found during a mining step joins the public chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HonestArrival {
    /// The block is held back for one decision: the adversary may answer it
    /// with a release of equal length (a race), or let it in with `mine`.
    #[default]
    Pending,
    /// The block is appended immediately and the window shifts at once.
    Appended,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub p: f64,
    pub gamma: f64,
    pub d: usize,
    pub f: usize,
    pub l: usize,
    #[serde(default)]
    pub arrival: HonestArrival,
}

impl AttackParams {
    pub fn new(p: f64, gamma: f64, d: usize, f: usize, l: usize) -> Result<Self, ModelError> {
        let params = Self {
            p,
            gamma,
            d,
            f,
            l,
            arrival: HonestArrival::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_arrival(mut self, arrival: HonestArrival) -> Self {
        self.arrival = arrival;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.p) {
            return Err(ModelError::InvalidParams(format!("p = {} is not in [0, 1]", self.p)));
        }
        if !unit(self.gamma) {
            return Err(ModelError::InvalidParams(format!("gamma = {} is not in [0, 1]", self.gamma)));
        }
        if self.d == 0 || self.f == 0 || self.l == 0 {
            return Err(ModelError::InvalidParams("d, f and l must be at least 1".into()));
        }
        if self.l > u8::MAX as usize {
            return Err(ModelError::InvalidParams(format!("l = {} exceeds {}", self.l, u8::MAX)));
        }
        if (self.d * self.f).checked_mul(self.l).is_none_or(|n| n >= u32::MAX as usize) {
            return Err(ModelError::InvalidParams("too many release actions".into()));
        }
        Ok(())
    }

    /// Upper bound `3 (l+1)^(d f) 2^(d-1)` on the number of states.
    pub fn state_bound(&self) -> f64 {
        3.0 * ((self.l + 1) as f64).powi((self.d * self.f) as i32) * 2f64.powi(self.d as i32 - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Honest,
    Adversary,
}

impl Owner {
    fn symbol(self) -> char {
        match self {
            Owner::Honest => 'H',
            Owner::Adversary => 'A',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateType {
    Mining,
    Honest,
    Adversary,
}

impl StateType {
    fn symbol(self) -> char {
        match self {
            StateType::Mining => 'M',
            StateType::Honest => 'H',
            StateType::Adversary => 'A',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChainState {
    d: usize,
    f: usize,
    forks: Vec<u8>,
    owners: Vec<Owner>,
    kind: StateType,
}

impl ChainState {
    pub fn new(d: usize, f: usize, forks: Vec<u8>, owners: Vec<Owner>, kind: StateType) -> Result<Self, ModelError> {
        if d == 0 || f == 0 || forks.len() != d * f || owners.len() != d - 1 {
            return Err(ModelError::InvalidParams(format!(
                "state shape mismatch: d={d}, f={f}, {} fork entries, {} owners",
                forks.len(),
                owners.len()
            )));
        }
        Ok(Self { d, f, forks, owners, kind })
    }

    pub fn depth(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.f
    }

    pub fn kind(&self) -> StateType {
        self.kind
    }

    pub fn owners(&self) -> &[Owner] {
        &self.owners
    }

    /// Row-major fork lengths, tip row first.
    pub fn forks(&self) -> &[u8] {
        &self.forks
    }

    /// Length of fork `j` on the public block at depth `i` (both 1-based).
    pub fn fork(&self, i: usize, j: usize) -> u8 {
        self.forks[(i - 1) * self.f + (j - 1)]
    }

    pub fn private_blocks(&self) -> u32 {
        self.forks.iter().map(|&x| x as u32).sum()
    }

    /// Appends the canonical encoding to `out`.
    pub fn encode_into(&self, out: &mut String) {
        encode_parts(self.kind, self.owners.iter().copied(), &self.forks, self.f, out);
    }

    pub fn encode(&self) -> String {
        let mut s = String::with_capacity(8 + self.owners.len() + 2 * self.forks.len());
        self.encode_into(&mut s);
        s
    }
}

/// Writes the canonical encoding of a state given by its parts: `owners`
/// tip first and `forks` row-major with `width` entries per row.
pub fn encode_parts(kind: StateType, owners: impl Iterator<Item = Owner>, forks: &[u8], width: usize, out: &mut String) {
    out.push_str("T:");
    out.push(kind.symbol());
    out.push_str(";O:");
    out.extend(owners.map(|o| o.symbol()));
    out.push_str(";C:");
    for (r, row) in forks.chunks(width).enumerate() {
        if r > 0 {
            out.push('|');
        }
        for (k, x) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let mut digits = [0u8; 3];
            out.push_str(format_u8(*x, &mut digits));
        }
    }
}

fn format_u8(x: u8, buf: &mut [u8; 3]) -> &str {
    let mut n = x;
    let mut i = 3;
    loop {
        i -= 1;
        buf[i] = b'0' + n % 10;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    std::str::from_utf8(&buf[i..]).expect("ascii digits")
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl FromStr for ChainState {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Parse {
            what: "state",
            input: s.to_string(),
        };
        let rest = s.strip_prefix("T:").ok_or_else(bad)?;
        let (kind, rest) = rest.split_once(";O:").ok_or_else(bad)?;
        let kind = match kind {
            "M" => StateType::Mining,
            "H" => StateType::Honest,
            "A" => StateType::Adversary,
            _ => return Err(bad()),
        };
        let (owners, forks) = rest.split_once(";C:").ok_or_else(bad)?;
        let owners = owners
            .chars()
            .map(|c| match c {
                'H' => Ok(Owner::Honest),
                'A' => Ok(Owner::Adversary),
                _ => Err(bad()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut width = None;
        let mut cells = Vec::new();
        for row in forks.split('|') {
            let before = cells.len();
            for x in row.split(',') {
                if x.is_empty() || !x.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                cells.push(x.parse::<u8>().map_err(|_| bad())?);
            }
            let w = cells.len() - before;
            if *width.get_or_insert(w) != w {
                return Err(bad());
            }
        }
        let f = width.ok_or_else(bad)?;
        let d = cells.len() / f;
        if owners.len() + 1 != d {
            return Err(bad());
        }
        ChainState::new(d, f, cells, owners, kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionLabel {
    Mine,
    /// Publish the first `k` blocks of fork `j` on the public block at depth `i`.
    Release { i: usize, j: usize, k: usize },
}

impl ActionLabel {
    /// Dense id: `mine` is 0, releases are numbered in `(i, j, k)` order.
    pub fn id(self, params: &AttackParams) -> ActionId {
        match self {
            ActionLabel::Mine => 0,
            ActionLabel::Release { i, j, k } => (1 + ((i - 1) * params.f + (j - 1)) * params.l + (k - 1)) as ActionId,
        }
    }

    pub fn from_id(id: ActionId, params: &AttackParams) -> Option<Self> {
        if id == 0 {
            return Some(ActionLabel::Mine);
        }
        let n = id as usize - 1;
        let (k, rest) = (n % params.l, n / params.l);
        let (j, i) = (rest % params.f, rest / params.f);
        (i < params.d).then_some(ActionLabel::Release {
            i: i + 1,
            j: j + 1,
            k: k + 1,
        })
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionLabel::Mine => f.write_str("mine"),
            ActionLabel::Release { i, j, k } => write!(f, "release:{i},{j},{k}"),
        }
    }
}

impl FromStr for ActionLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Parse {
            what: "action",
            input: s.to_string(),
        };
        if s == "mine" {
            return Ok(ActionLabel::Mine);
        }
        let args = s.strip_prefix("release:").ok_or_else(bad)?;
        let mut parts = args.split(',').map(|x| x.parse::<usize>().ok().filter(|&v| v >= 1));
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(Some(i)), Some(Some(j)), Some(Some(k)), None) => Ok(ActionLabel::Release { i, j, k }),
            _ => Err(bad()),
        }
    }
}

/// One successor of a state-action pair, with block accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub state: ChainState,
    pub prob: f64,
    pub reward_adv: u32,
    pub reward_hon: u32,
    /// Blocks mined during this step that entered the model.
    pub created: u32,
    /// Blocks that can no longer join the main chain after this step.
    pub orphaned: u32,
}

impl Outcome {
    fn certain(state: ChainState) -> Self {
        Self {
            state,
            prob: 1.0,
            reward_adv: 0,
            reward_hon: 0,
            created: 0,
            orphaned: 0,
        }
    }
}

/// Blocks currently tracked by a state: private forks, the public window and
/// a pending honest block.
pub fn tracked_blocks(state: &ChainState, params: &AttackParams) -> u32 {
    let pending = params.arrival == HonestArrival::Pending && state.kind == StateType::Honest;
    state.private_blocks() + (state.d as u32 - 1) + pending as u32
}

pub fn initial_state(params: &AttackParams) -> ChainState {
    ChainState {
        d: params.d,
        f: params.f,
        forks: vec![0; params.d * params.f],
        owners: vec![Owner::Honest; params.d - 1],
        kind: StateType::Mining,
    }
}

/// Number of blocks the adversary extends in a mining step: every non-empty
/// fork plus one fresh start per depth that still has an empty slot.
pub fn mining_fanout(state: &ChainState) -> usize {
    let live = state.forks.iter().filter(|&&x| x > 0).count();
    let fresh = state.forks.chunks(state.f).filter(|row| row.contains(&0)).count();
    live + fresh
}

fn check_shape(state: &ChainState, params: &AttackParams) -> Result<(), ModelError> {
    if state.d != params.d || state.f != params.f || state.forks.iter().any(|&x| x as usize > params.l) {
        return Err(ModelError::InvalidParams(format!("state {state} does not fit d={}, f={}, l={}", params.d, params.f, params.l)));
    }
    Ok(())
}

fn unavailable(state: &ChainState, action: ActionLabel) -> ModelError {
    ModelError::Unavailable {
        state: state.encode(),
        action: action.to_string(),
    }
}

/// Outcomes of `mine` in a state of type `mining`.
pub fn mining_step_distribution(state: &ChainState, params: &AttackParams) -> Result<Vec<Outcome>, ModelError> {
    check_shape(state, params)?;
    if state.kind != StateType::Mining {
        return Err(ModelError::InvalidParams(format!("mining step requested in non-mining state {state}")));
    }
    let (d, f, l) = (params.d, params.f, params.l as u8);
    let sigma = mining_fanout(state) as f64;
    let denom = 1.0 - params.p + params.p * sigma;
    let adv_prob = params.p / denom;
    let hon_prob = (1.0 - params.p) / denom;

    let mut out = Vec::with_capacity(d * f + 1);
    if hon_prob > 0.0 {
        let mut honest = match params.arrival {
            HonestArrival::Pending => Outcome::certain(ChainState {
                kind: StateType::Honest,
                ..state.clone()
            }),
            HonestArrival::Appended => append_honest(state, StateType::Honest),
        };
        honest.prob = hon_prob;
        honest.created = 1;
        out.push(honest);
    }
    if adv_prob > 0.0 {
        for i in 0..d {
            let row = &state.forks[i * f..(i + 1) * f];
            let fresh = row.iter().position(|&x| x == 0);
            for j in 0..f {
                let len = row[j];
                if len == 0 && Some(j) != fresh {
                    continue;
                }
                let mut next = state.clone();
                next.kind = StateType::Adversary;
                next.forks[i * f + j] = (len + 1).min(l);
                out.push(Outcome {
                    state: next,
                    prob: adv_prob,
                    reward_adv: 0,
                    reward_hon: 0,
                    created: (len < l) as u32,
                    orphaned: 0,
                });
            }
        }
    }
    Ok(out)
}

/// Appends one honest block: the window shifts by one, the forks on the
/// block leaving the bottom row are orphaned and the block leaving `O`
/// finalizes.
fn append_honest(state: &ChainState, kind: StateType) -> Outcome {
    let (d, f) = (state.d, state.f);
    let orphaned: u32 = state.forks[(d - 1) * f..].iter().map(|&x| x as u32).sum();
    let mut forks = vec![0u8; d * f];
    forks[f..].copy_from_slice(&state.forks[..(d - 1) * f]);
    let exiting = if d == 1 { Owner::Honest } else { state.owners[d - 2] };
    let mut owners = Vec::with_capacity(d - 1);
    if d > 1 {
        owners.push(Owner::Honest);
        owners.extend_from_slice(&state.owners[..d - 2]);
    }
    Outcome {
        state: ChainState {
            d,
            f,
            forks,
            owners,
            kind,
        },
        prob: 1.0,
        reward_adv: (exiting == Owner::Adversary) as u32,
        reward_hon: (exiting == Owner::Honest) as u32,
        created: 0,
        orphaned,
    }
}

/// The released chain becomes the main chain. Public blocks above the fork
/// point are orphaned, older blocks sink by `g = k - i + 1` and the `g`
/// deepest window entries finalize.
fn accept_release(state: &ChainState, i: usize, j: usize, k: usize, pending: bool) -> Outcome {
    let (d, f) = (state.d, state.f);
    let g = k + 1 - i;
    let row_sum = |r: &[u8]| r.iter().map(|&x| x as u32).sum::<u32>();

    let mut window: Vec<Owner> = vec![Owner::Adversary; k];
    window.extend_from_slice(&state.owners[(i - 1).min(state.owners.len())..]);
    let (mut reward_adv, mut reward_hon) = (0, 0);
    for o in &window[d - 1..] {
        match o {
            Owner::Adversary => reward_adv += 1,
            Owner::Honest => reward_hon += 1,
        }
    }
    window.truncate(d - 1);

    let mut old = state.forks.clone();
    let released = old[(i - 1) * f + (j - 1)];
    old[(i - 1) * f + (j - 1)] = 0;
    let mut forks = vec![0u8; d * f];
    forks[0] = released - k as u8;
    let mut orphaned = (i as u32 - 1) + pending as u32 + row_sum(&old[..(i - 1) * f]);
    for r in i - 1..d {
        let row = &old[r * f..(r + 1) * f];
        if r + g < d {
            forks[(r + g) * f..(r + g + 1) * f].copy_from_slice(row);
        } else {
            orphaned += row_sum(row);
        }
    }
    Outcome {
        state: ChainState {
            d,
            f,
            forks,
            owners: window,
            kind: StateType::Mining,
        },
        prob: 1.0,
        reward_adv,
        reward_hon,
        created: 0,
        orphaned,
    }
}

/// Smallest published length allowed for a release at depth `i`.
fn min_release(i: usize, kind: StateType, arrival: HonestArrival) -> Option<usize> {
    match (kind, arrival) {
        (StateType::Mining, _) => None,
        (StateType::Honest, HonestArrival::Appended) => Some((i - 1).max(1)),
        (StateType::Honest, HonestArrival::Pending) | (StateType::Adversary, _) => Some(i),
    }
}

/// Actions available in `state`, ordered by action id.
pub fn available_actions(state: &ChainState, params: &AttackParams) -> Vec<ActionLabel> {
    let mut actions = vec![ActionLabel::Mine];
    for i in 1..=state.d {
        let Some(min_k) = min_release(i, state.kind, params.arrival) else {
            break;
        };
        for j in 1..=state.f {
            for k in min_k..=state.fork(i, j) as usize {
                actions.push(ActionLabel::Release { i, j, k });
            }
        }
    }
    actions
}

/// Outcomes of a release action.
pub fn apply_release(state: &ChainState, action: ActionLabel, params: &AttackParams) -> Result<Vec<Outcome>, ModelError> {
    check_shape(state, params)?;
    let ActionLabel::Release { i, j, k } = action else {
        return Err(unavailable(state, action));
    };
    let in_range = (1..=state.d).contains(&i) && (1..=state.f).contains(&j) && k >= 1 && k <= state.fork(i, j) as usize;
    let allowed = min_release(i, state.kind, params.arrival).is_some_and(|m| k >= m);
    if !in_range || !allowed {
        return Err(unavailable(state, action));
    }
    let g = k + 1 - i;
    let pending = params.arrival == HonestArrival::Pending && state.kind == StateType::Honest;
    // A tie with the chain the honest miners currently extend is a race.
    let tie = match (state.kind, params.arrival) {
        (StateType::Honest, HonestArrival::Appended) => g == 0,
        (StateType::Honest, HonestArrival::Pending) => g == 1,
        _ => false,
    };
    let accept = accept_release(state, i, j, k, pending);
    if !tie {
        return Ok(vec![accept]);
    }
    let reject = match params.arrival {
        HonestArrival::Appended => Outcome::certain(ChainState {
            kind: StateType::Mining,
            ..state.clone()
        }),
        HonestArrival::Pending => append_honest(state, StateType::Mining),
    };
    let mut out = Vec::with_capacity(2);
    if params.gamma > 0.0 {
        out.push(Outcome {
            prob: params.gamma,
            ..accept
        });
    }
    if params.gamma < 1.0 {
        out.push(Outcome {
            prob: 1.0 - params.gamma,
            ..reject
        });
    }
    Ok(out)
}

/// Outcomes of any available action.
pub fn step_outcomes(state: &ChainState, action: ActionLabel, params: &AttackParams) -> Result<Vec<Outcome>, ModelError> {
    match (action, state.kind) {
        (ActionLabel::Mine, StateType::Mining) => mining_step_distribution(state, params),
        (ActionLabel::Mine, StateType::Honest) if params.arrival == HonestArrival::Pending => {
            check_shape(state, params)?;
            Ok(vec![append_honest(state, StateType::Mining)])
        }
        (ActionLabel::Mine, _) => {
            check_shape(state, params)?;
            Ok(vec![Outcome::certain(ChainState {
                kind: StateType::Mining,
                ..state.clone()
            })])
        }
        (release, _) => apply_release(state, release, params),
    }
}

/// Default cap on the number of states `build_model` may create.
pub const DEFAULT_MAX_STATES: usize = 4_000_000;

/// A built model together with its state dictionary.
#[derive(Clone, Debug)]
pub struct AttackModel {
    params: AttackParams,
    mdp: SparseMdp,
    states: Vec<ChainState>,
    index: HashMap<ChainState, StateId>,
}

impl AttackModel {
    pub fn params(&self) -> &AttackParams {
        &self.params
    }

    pub fn mdp(&self) -> &SparseMdp {
        &self.mdp
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, id: StateId) -> &ChainState {
        &self.states[id as usize]
    }

    pub fn states(&self) -> &[ChainState] {
        &self.states
    }

    pub fn id_of(&self, state: &ChainState) -> Option<StateId> {
        self.index.get(state).copied()
    }

    pub fn action_label(&self, id: ActionId) -> ActionLabel {
        ActionLabel::from_id(id, &self.params).expect("action ids come from labels")
    }
}

/// Explores all states reachable from the initial state. Ids are assigned
/// breadth-first, each level sorted by canonical encoding.
pub fn build_model(params: &AttackParams, max_states: usize) -> Result<AttackModel, ModelError> {
    params.validate()?;
    let estimate = params.state_bound();
    if estimate > max_states as f64 {
        return Err(ModelError::ResourceCap {
            estimate,
            cap: max_states,
        });
    }

    let start = initial_state(params);
    let mut states = vec![start.clone()];
    let mut index = HashMap::from([(start, 0 as StateId)]);
    let mut level_start = 0;
    while level_start < states.len() {
        let level_end = states.len();
        let mut next: Vec<(String, ChainState)> = Vec::new();
        for s in level_start..level_end {
            let state = states[s].clone();
            for action in available_actions(&state, params) {
                for o in step_outcomes(&state, action, params)? {
                    if !index.contains_key(&o.state) {
                        index.insert(o.state.clone(), StateId::MAX);
                        next.push((o.state.encode(), o.state));
                    }
                }
            }
        }
        next.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        for (_, state) in next {
            *index.get_mut(&state).expect("inserted above") = states.len() as StateId;
            states.push(state);
        }
        level_start = level_end;
    }

    let mut builder = MdpBuilder::new();
    for state in &states {
        let rows = available_actions(state, params)
            .into_iter()
            .map(|action| {
                let transitions = step_outcomes(state, action, params)?
                    .into_iter()
                    .map(|o| Transition::new(index[&o.state], o.prob, o.reward_adv, o.reward_hon))
                    .collect::<Vec<_>>();
                Ok((action.id(params), transitions))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        builder.push_state(rows);
    }
    let mdp = builder.build(0)?;
    Ok(AttackModel {
        params: *params,
        mdp,
        states,
        index,
    })
}
