//! Average-reward (mean-payoff) solver for unichain MDPs.
//!
//! The default method is Howard policy iteration. Policy evaluation fixes the
//! bias at a recurrent reference state and solves the renewal system
//! `x(s) = b(s) + sum_{t != ref} P(s,t) x(t)` twice, once for the expected
//! hitting time and once for the expected reward until hitting `ref`. Small
//! systems are solved by dense elimination, larger ones by Gauss-Seidel.
//! Relative value iteration is available as a fallback.

use thiserror::Error;

use crate::mdp::{induce_chain, InducedChain, MdpError, PositionalStrategy, SparseMdp, StateId, Transition};
use crate::par::{self, Exec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("reward vector has {got} entries, model has {expected} transitions")]
    RewardLength { expected: usize, got: usize },
    #[error("chain is not unichain: {classes} closed recurrent classes")]
    NotUnichain { classes: usize },
    #[error("singular linear system during policy evaluation")]
    Singular,
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    PolicyIteration,
    RelativeValueIteration,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub method: Method,
    pub max_policy_iterations: usize,
    pub max_value_iterations: usize,
    /// Largest state count solved by dense elimination.
    pub dense_limit: usize,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            method: Method::PolicyIteration,
            max_policy_iterations: 10_000,
            max_value_iterations: 1_000_000,
            dense_limit: 1000,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_dense_limit(mut self, dense_limit: usize) -> Self {
        self.dense_limit = dense_limit;
        self
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Optimal mean payoff.
    pub gain: f64,
    pub strategy: PositionalStrategy,
    /// Bias normalized to zero at the initial state.
    pub bias: Vec<f64>,
    pub iterations: usize,
    /// Bellman residual `max_s |max_a Q(s,a) - gain - bias(s)|`.
    pub residual: f64,
}

/// Long-run average of each reward component under a fixed strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainPair {
    pub gain_adv: f64,
    pub gain_hon: f64,
}

/// Read-only view of a Markov chain's rows.
trait Rows: Sync {
    fn len(&self) -> usize;
    fn row(&self, s: usize) -> &[Transition];
}

impl Rows for InducedChain {
    fn len(&self) -> usize {
        self.state_count()
    }
    fn row(&self, s: usize) -> &[Transition] {
        InducedChain::row(self, s as StateId)
    }
}

struct PolicyRows<'a> {
    mdp: &'a SparseMdp,
    slots: &'a [usize],
}

impl Rows for PolicyRows<'_> {
    fn len(&self) -> usize {
        self.slots.len()
    }
    fn row(&self, s: usize) -> &[Transition] {
        self.mdp.slot_transitions(self.slots[s])
    }
}

/// Closed classes of the chain; returns the recurrent reference state.
/// The initial state is preferred when it is recurrent.
fn recurrent_reference<R: Rows>(rows: &R, initial: usize) -> Result<usize, SolverError> {
    let n = rows.len();
    let comp = strongly_connected(rows);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut closed = vec![true; ncomp];
    for s in 0..n {
        for t in rows.row(s) {
            if comp[t.target as usize] != comp[s] {
                closed[comp[s]] = false;
            }
        }
    }
    let classes = closed.iter().filter(|&&c| c).count();
    if classes != 1 {
        return Err(SolverError::NotUnichain { classes });
    }
    if closed[comp[initial]] {
        return Ok(initial);
    }
    Ok((0..n).find(|&s| closed[comp[s]]).expect("one closed class exists"))
}

/// Iterative Tarjan. Returns a component index per state.
fn strongly_connected<R: Rows>(rows: &R) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = rows.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            let row = rows.row(v);
            if *edge < row.len() {
                let w = row[*edge].target as usize;
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Dense Gaussian elimination with partial pivoting on a row-major `n x n`
/// matrix, for several right-hand sides at once.
fn solve_dense(n: usize, a: &mut [f64], rhs: &mut [Vec<f64>]) -> Result<(), SolverError> {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for col in 0..n {
        let (pivot, best) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= 1e-13 * scale {
            return Err(SolverError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for b in rhs.iter_mut() {
                b.swap(col, pivot);
            }
        }
        let diag = a[col * n + col];
        let (upper, lower) = a.split_at_mut((col + 1) * n);
        let pivot_row = &upper[col * n..col * n + n];
        for r in 0..n - col - 1 {
            let row = &mut lower[r * n..r * n + n];
            let factor = row[col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                row[k] -= factor * pivot_row[k];
            }
            for b in rhs.iter_mut() {
                b[col + 1 + r] -= factor * b[col];
            }
        }
    }
    for b in rhs.iter_mut() {
        for col in (0..n).rev() {
            let mut acc = b[col];
            for k in col + 1..n {
                acc -= a[col * n + k] * b[k];
            }
            b[col] = acc / a[col * n + col];
        }
    }
    Ok(())
}

const GS_MAX_SWEEPS: usize = 1_000_000;
const GS_RELATIVE_STOP: f64 = 1e-14;

/// Solves `x(s) = b_k(s) + sum_{t != reference} P(s,t) x(t)` for each
/// right-hand side `b_k`.
fn solve_renewal<R: Rows>(
    rows: &R,
    reference: usize,
    rhs: Vec<Vec<f64>>,
    dense_limit: usize,
) -> Result<Vec<Vec<f64>>, SolverError> {
    let n = rows.len();
    if n <= dense_limit {
        let mut a = vec![0.0; n * n];
        for s in 0..n {
            a[s * n + s] += 1.0;
            for t in rows.row(s) {
                let t_idx = t.target as usize;
                if t_idx != reference {
                    a[s * n + t_idx] -= t.prob;
                }
            }
        }
        let mut rhs = rhs;
        solve_dense(n, &mut a, &mut rhs)?;
        return Ok(rhs);
    }

    let mut xs: Vec<Vec<f64>> = rhs.to_vec();
    let self_loop: Vec<f64> = (0..n)
        .map(|s| {
            if s == reference {
                0.0
            } else {
                rows.row(s)
                    .iter()
                    .filter(|t| t.target as usize == s)
                    .map(|t| t.prob)
                    .sum()
            }
        })
        .collect();
    let mut last_delta = f64::INFINITY;
    for _ in 0..GS_MAX_SWEEPS {
        let mut delta = 0.0f64;
        let mut scale = 1.0f64;
        for s in 0..n {
            let denom = 1.0 - self_loop[s];
            if denom <= 0.0 {
                return Err(SolverError::Singular);
            }
            for (x, b) in xs.iter_mut().zip(&rhs) {
                let mut acc = b[s];
                for t in rows.row(s) {
                    let ti = t.target as usize;
                    if ti != reference && ti != s {
                        acc += t.prob * x[ti];
                    }
                }
                let new = acc / denom;
                delta = delta.max((new - x[s]).abs());
                scale = scale.max(new.abs());
                x[s] = new;
            }
        }
        if !delta.is_finite() {
            return Err(SolverError::Singular);
        }
        last_delta = delta / scale;
        if last_delta <= GS_RELATIVE_STOP {
            return Ok(xs);
        }
    }
    Err(SolverError::NoConvergence {
        iterations: GS_MAX_SWEEPS,
        residual: last_delta,
    })
}

/// Gain and bias (zero at `initial`) of a fixed policy.
fn evaluate_rows<R: Rows>(
    rows: &R,
    rewards: impl Fn(usize, usize) -> f64,
    initial: usize,
    dense_limit: usize,
) -> Result<(f64, Vec<f64>), SolverError> {
    let n = rows.len();
    let reference = recurrent_reference(rows, initial)?;
    let expected: Vec<f64> = (0..n)
        .map(|s| {
            rows.row(s)
                .iter()
                .enumerate()
                .map(|(k, t)| t.prob * rewards(s, k))
                .sum()
        })
        .collect();
    let sol = solve_renewal(rows, reference, vec![vec![1.0; n], expected], dense_limit)?;
    let (tau, rho) = (&sol[0], &sol[1]);
    let gain = rho[reference] / tau[reference];
    let mut bias: Vec<f64> = (0..n).map(|s| rho[s] - gain * tau[s]).collect();
    bias[reference] = 0.0;
    let shift = bias[initial];
    for h in &mut bias {
        *h -= shift;
    }
    Ok((gain, bias))
}

fn check_inputs(mdp: &SparseMdp, rewards: &[f64], tolerance: f64) -> Result<(), SolverError> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(SolverError::InvalidTolerance(tolerance));
    }
    if rewards.len() != mdp.transition_count() {
        return Err(SolverError::RewardLength {
            expected: mdp.transition_count(),
            got: rewards.len(),
        });
    }
    Ok(())
}

#[inline]
fn q_value(mdp: &SparseMdp, rewards: &[f64], slot: usize, values: &[f64]) -> f64 {
    let range = mdp.slot_transition_range(slot);
    mdp.all_transitions()[range.clone()]
        .iter()
        .zip(&rewards[range])
        .map(|(t, r)| t.prob * (r + values[t.target as usize]))
        .sum()
}

/// Greedy choice: keep `current` unless some action beats it by more than
/// `margin`; otherwise the lowest action id within `margin` of the best.
fn greedy_slot(
    mdp: &SparseMdp,
    rewards: &[f64],
    state: usize,
    values: &[f64],
    current: Option<usize>,
    margin: f64,
) -> (usize, f64) {
    let slots = mdp.slots(state as StateId);
    let q: Vec<f64> = slots
        .clone()
        .map(|slot| q_value(mdp, rewards, slot, values))
        .collect();
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(cur) = current {
        if q[cur - slots.start] >= best - margin {
            return (cur, best);
        }
    }
    let k = q.iter().position(|&v| v >= best - margin).expect("non-empty");
    (slots.start + k, best)
}

fn bellman_residual(mdp: &SparseMdp, rewards: &[f64], gain: f64, bias: &[f64], exec: Exec) -> f64 {
    par::map_range(mdp.state_count(), exec, |s| {
        let best = mdp
            .slots(s as StateId)
            .map(|slot| q_value(mdp, rewards, slot, bias))
            .fold(f64::NEG_INFINITY, f64::max);
        (best - gain - bias[s]).abs()
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// Optimal mean payoff and an optimal positional strategy.
pub fn solve_mean_payoff(mdp: &SparseMdp, rewards: &[f64], config: &SolverConfig) -> Result<SolveResult, SolverError> {
    solve_mean_payoff_from(mdp, rewards, config, None)
}

/// Like [`solve_mean_payoff`], starting policy iteration from `warm_start`.
pub fn solve_mean_payoff_from(
    mdp: &SparseMdp,
    rewards: &[f64],
    config: &SolverConfig,
    warm_start: Option<&PositionalStrategy>,
) -> Result<SolveResult, SolverError> {
    check_inputs(mdp, rewards, config.tolerance)?;
    match config.method {
        Method::PolicyIteration => match policy_iteration(mdp, rewards, config, warm_start) {
            Err(SolverError::NoConvergence { .. } | SolverError::NotUnichain { .. } | SolverError::Singular) => {
                relative_value_iteration(mdp, rewards, config)
            }
            other => other,
        },
        Method::RelativeValueIteration => relative_value_iteration(mdp, rewards, config),
    }
}

fn policy_iteration(
    mdp: &SparseMdp,
    rewards: &[f64],
    config: &SolverConfig,
    warm_start: Option<&PositionalStrategy>,
) -> Result<SolveResult, SolverError> {
    let initial = mdp.initial_state() as usize;
    let mut slots: Vec<usize> = match warm_start {
        Some(s) => s.slots(mdp)?,
        None => (0..mdp.state_count()).map(|s| mdp.slots(s as StateId).start).collect(),
    };

    for iteration in 1..=config.max_policy_iterations {
        let view = PolicyRows { mdp, slots: &slots };
        let (gain, bias) = evaluate_rows(
            &view,
            |s, k| rewards[mdp.slot_transition_range(slots[s]).start + k],
            initial,
            config.dense_limit,
        )?;
        let scale = bias.iter().fold(1.0f64, |m, h| m.max(h.abs()));
        let margin = 1e-12 * scale;
        let improved = par::map_range(mdp.state_count(), config.exec, |s| {
            greedy_slot(mdp, rewards, s, &bias, Some(slots[s]), margin).0
        });
        if improved == slots {
            let residual = bellman_residual(mdp, rewards, gain, &bias, config.exec);
            if residual > config.tolerance {
                return Err(SolverError::NoConvergence {
                    iterations: iteration,
                    residual,
                });
            }
            return Ok(SolveResult {
                gain,
                strategy: PositionalStrategy::from_slots(mdp, &slots),
                bias,
                iterations: iteration,
                residual,
            });
        }
        slots = improved;
    }
    Err(SolverError::NoConvergence {
        iterations: config.max_policy_iterations,
        residual: f64::NAN,
    })
}

/// Relative value iteration on the aperiodicity-transformed model
/// `P' = (1 - a) I + a P`, stopped on the span of `Tv - v`.
fn relative_value_iteration(mdp: &SparseMdp, rewards: &[f64], config: &SolverConfig) -> Result<SolveResult, SolverError> {
    const DAMPING: f64 = 0.5;
    let n = mdp.state_count();
    let initial = mdp.initial_state() as usize;
    let mut values = vec![0.0; n];
    let mut backup = vec![0.0; n];
    let mut span = f64::INFINITY;

    for iteration in 1..=config.max_value_iterations {
        par::fill_indexed(&mut backup, config.exec, |s| {
            mdp.slots(s as StateId)
                .map(|slot| q_value(mdp, rewards, slot, &values))
                .fold(f64::NEG_INFINITY, f64::max)
        });
        let (lo, hi) = values
            .iter()
            .zip(&backup)
            .map(|(v, tv)| tv - v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        span = hi - lo;
        if span <= config.tolerance {
            let slots = par::map_range(n, config.exec, |s| greedy_slot(mdp, rewards, s, &values, None, 0.0).0);
            let view = PolicyRows { mdp, slots: &slots };
            let gain = match evaluate_rows(
                &view,
                |s, k| rewards[mdp.slot_transition_range(slots[s]).start + k],
                initial,
                config.dense_limit,
            ) {
                Ok((gain, _)) => gain,
                // The greedy policy may split into several classes on
                // weakly communicating models; the bounds still hold.
                Err(SolverError::NotUnichain { .. } | SolverError::Singular) => 0.5 * (lo + hi),
                Err(e) => return Err(e),
            };
            let shift = values[initial];
            let bias: Vec<f64> = values.iter().map(|v| v - shift).collect();
            return Ok(SolveResult {
                gain,
                strategy: PositionalStrategy::from_slots(mdp, &slots),
                bias,
                iterations: iteration,
                residual: span,
            });
        }
        for (v, tv) in values.iter_mut().zip(&backup) {
            *v += DAMPING * (tv - *v);
        }
        let shift = values[initial];
        for v in &mut values {
            *v -= shift;
        }
    }
    Err(SolverError::NoConvergence {
        iterations: config.max_value_iterations,
        residual: span,
    })
}

/// Gain and bias of a fixed strategy under scalar `rewards`.
pub fn evaluate_gain(
    mdp: &SparseMdp,
    strategy: &PositionalStrategy,
    rewards: &[f64],
    config: &SolverConfig,
) -> Result<(f64, Vec<f64>), SolverError> {
    check_inputs(mdp, rewards, config.tolerance)?;
    let slots = strategy.slots(mdp)?;
    let view = PolicyRows { mdp, slots: &slots };
    evaluate_rows(
        &view,
        |s, k| rewards[mdp.slot_transition_range(slots[s]).start + k],
        mdp.initial_state() as usize,
        config.dense_limit,
    )
}

/// Stationary per-step averages of both reward components under `strategy`.
pub fn evaluate_strategy(mdp: &SparseMdp, strategy: &PositionalStrategy, tolerance: f64) -> Result<GainPair, SolverError> {
    let chain = induce_chain(mdp, strategy)?;
    chain_gains(&chain, tolerance)
}

/// Stationary per-step averages of both reward components of a chain.
pub fn chain_gains(chain: &InducedChain, tolerance: f64) -> Result<GainPair, SolverError> {
    let pi = stationary_distribution(chain, tolerance)?;
    let (mut gain_adv, mut gain_hon) = (0.0, 0.0);
    for (s, &mass) in pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for t in chain.row(s as StateId) {
            gain_adv += mass * t.prob * t.reward_adv as f64;
            gain_hon += mass * t.prob * t.reward_hon as f64;
        }
    }
    Ok(GainPair { gain_adv, gain_hon })
}

/// Stationary distribution of a unichain Markov chain.
pub fn stationary_distribution(chain: &InducedChain, tolerance: f64) -> Result<Vec<f64>, SolverError> {
    stationary_distribution_with(chain, tolerance, SolverConfig::default().dense_limit)
}

/// [`stationary_distribution`] with an explicit dense/iterative threshold.
pub fn stationary_distribution_with(chain: &InducedChain, tolerance: f64, dense_limit: usize) -> Result<Vec<f64>, SolverError> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(SolverError::InvalidTolerance(tolerance));
    }
    let n = chain.state_count();
    let reference = recurrent_reference(chain, chain.initial_state() as usize)?;
    let mut pi = if n <= dense_limit {
        // (I - P)^T pi = 0 with the reference equation replaced by sum(pi) = 1.
        let mut a = vec![0.0; n * n];
        for s in 0..n {
            a[s * n + s] += 1.0;
            for t in chain.row(s as StateId) {
                a[t.target as usize * n + s] -= t.prob;
            }
        }
        for s in 0..n {
            a[reference * n + s] = 1.0;
        }
        let mut rhs = vec![vec![0.0; n]];
        rhs[0][reference] = 1.0;
        solve_dense(n, &mut a, &mut rhs)?;
        rhs.pop().unwrap()
    } else {
        visits_per_cycle(chain, reference)?
    };
    for x in &mut pi {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for x in &mut pi {
        *x /= total;
    }

    let mut flow = vec![0.0; n];
    for (s, &mass) in pi.iter().enumerate() {
        for t in chain.row(s as StateId) {
            flow[t.target as usize] += mass * t.prob;
        }
    }
    let residual = flow.iter().zip(&pi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if residual > tolerance {
        return Err(SolverError::NoConvergence {
            iterations: 0,
            residual,
        });
    }
    Ok(pi)
}

/// Expected visits to each state between consecutive visits to `reference`
/// (Gauss-Seidel on the transposed cycle equations).
fn visits_per_cycle(chain: &InducedChain, reference: usize) -> Result<Vec<f64>, SolverError> {
    let n = chain.state_count();
    let mut in_offsets = vec![0usize; n + 1];
    for row in chain.rows() {
        for t in row {
            in_offsets[t.target as usize + 1] += 1;
        }
    }
    for i in 0..n {
        in_offsets[i + 1] += in_offsets[i];
    }
    let mut fill = in_offsets.clone();
    let mut incoming = vec![(0usize, 0.0f64); in_offsets[n]];
    for (s, row) in chain.rows().enumerate() {
        for t in row {
            let slot = &mut fill[t.target as usize];
            incoming[*slot] = (s, t.prob);
            *slot += 1;
        }
    }

    let mut nu = vec![0.0; n];
    nu[reference] = 1.0;
    let mut last = f64::INFINITY;
    for _ in 0..GS_MAX_SWEEPS {
        let mut delta = 0.0f64;
        let mut scale = 1.0f64;
        for t in 0..n {
            if t == reference {
                continue;
            }
            let mut acc = 0.0;
            let mut diag = 0.0;
            for &(s, prob) in &incoming[in_offsets[t]..in_offsets[t + 1]] {
                if s == t {
                    diag += prob;
                } else {
                    acc += nu[s] * prob;
                }
            }
            if diag >= 1.0 {
                return Err(SolverError::Singular);
            }
            let new = acc / (1.0 - diag);
            delta = delta.max((new - nu[t]).abs());
            scale = scale.max(new.abs());
            nu[t] = new;
        }
        last = delta / scale;
        if last <= GS_RELATIVE_STOP {
            return Ok(nu);
        }
    }
    Err(SolverError::NoConvergence {
        iterations: GS_MAX_SWEEPS,
        residual: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{scalarize_reward, MdpBuilder};

    fn t(target: StateId, prob: f64) -> Transition {
        Transition::new(target, prob, 0, 0)
    }

    /// Scalar rewards given per transition in build order.
    fn solve(mdp: &SparseMdp, rewards: &[f64]) -> SolveResult {
        solve_mean_payoff(mdp, rewards, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn two_cycle_gain_is_half() {
        let mut b = MdpBuilder::new();
        b.push_state(vec![(0, vec![t(1, 1.0)])]);
        b.push_state(vec![(0, vec![t(0, 1.0)])]);
        let mdp = b.build(0).unwrap();
        let res = solve(&mdp, &[1.0, 0.0]);
        assert!((res.gain - 0.5).abs() < 1e-12);
        assert!(res.residual <= 1e-10);
    }

    #[test]
    fn stay_or_go_picks_go() {
        // A: stay (A, r=0.4) or go (B, r=0); B: B (r=1). Staying splits
        // the chain in two, so this also exercises the fallback.
        let mut b = MdpBuilder::new();
        b.push_state(vec![(0, vec![t(0, 1.0)]), (1, vec![t(1, 1.0)])]);
        b.push_state(vec![(0, vec![t(1, 1.0)])]);
        let mdp = b.build(0).unwrap();
        let res = solve(&mdp, &[0.4, 0.0, 1.0]);
        assert!((res.gain - 1.0).abs() < 1e-9);
        assert_eq!(res.strategy.action(0), 1);
    }

    #[test]
    fn stationary_weighted_gain() {
        // A -> {A: .5 r=2, B: .5 r=0}, B -> {A: 1 r=0.4}: pi = (2/3, 1/3).
        let mut b = MdpBuilder::new();
        b.push_state(vec![(0, vec![t(0, 0.5), t(1, 0.5)])]);
        b.push_state(vec![(0, vec![t(0, 1.0)])]);
        let mdp = b.build(0).unwrap();
        let res = solve(&mdp, &[2.0, 0.0, 0.4]);
        assert!((res.gain - 0.8).abs() < 1e-12);
    }

    #[test]
    fn stationary_examples() {
        let one = InducedChain::from_rows(0, vec![vec![t(0, 1.0)]]).unwrap();
        assert_eq!(stationary_distribution(&one, 1e-12).unwrap(), vec![1.0]);

        let cycle = InducedChain::from_rows(0, vec![vec![t(1, 1.0)], vec![t(0, 1.0)]]).unwrap();
        let pi = stationary_distribution(&cycle, 1e-12).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);

        let lazy = InducedChain::from_rows(0, vec![vec![t(0, 0.5), t(1, 0.5)], vec![t(0, 1.0)]]).unwrap();
        for limit in [0, 1000] {
            let pi = stationary_distribution_with(&lazy, 1e-12, limit).unwrap();
            assert!((pi[0] - 2.0 / 3.0).abs() < 1e-13);
            assert!((pi[1] - 1.0 / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn two_closed_classes_are_rejected() {
        let chain = InducedChain::from_rows(0, vec![vec![t(0, 1.0)], vec![t(1, 1.0)]]).unwrap();
        assert_eq!(
            stationary_distribution(&chain, 1e-12),
            Err(SolverError::NotUnichain { classes: 2 })
        );
    }

    #[test]
    fn transient_initial_state() {
        // 0 -> 1 -> 2 -> 1: state 0 is transient.
        let chain = InducedChain::from_rows(0, vec![vec![t(1, 1.0)], vec![t(2, 1.0)], vec![t(1, 1.0)]]).unwrap();
        for limit in [0, 1000] {
            let pi = stationary_distribution_with(&chain, 1e-12, limit).unwrap();
            assert!(pi[0].abs() < 1e-15);
            assert!((pi[1] - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn component_gains() {
        let chain = InducedChain::from_rows(
            0,
            vec![vec![Transition::new(1, 1.0, 0, 1)], vec![Transition::new(0, 1.0, 0, 0)]],
        )
        .unwrap();
        let g = chain_gains(&chain, 1e-12).unwrap();
        assert_eq!(g.gain_adv, 0.0);
        assert!((g.gain_hon - 0.5).abs() < 1e-14);

        let mut b = MdpBuilder::new();
        b.push_state(vec![(0, vec![Transition::new(0, 0.5, 2, 0), Transition::new(1, 0.5, 0, 0)])]);
        b.push_state(vec![(0, vec![Transition::new(0, 1.0, 0, 0)])]);
        let mdp = b.build(0).unwrap();
        // Integer components cannot carry 0.4, so check the 2-vs-0 part: 2 * 1/3.
        let g = evaluate_strategy(&mdp, &PositionalStrategy::first_actions(&mdp), 1e-12).unwrap();
        assert!((g.gain_adv - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn value_iteration_agrees_with_policy_iteration() {
        let mut b = MdpBuilder::new();
        b.push_state(vec![
            (0, vec![Transition::new(0, 0.3, 1, 0), Transition::new(1, 0.7, 0, 1)]),
            (1, vec![Transition::new(1, 1.0, 2, 0)]),
        ]);
        b.push_state(vec![
            (0, vec![Transition::new(0, 1.0, 0, 1)]),
            (2, vec![Transition::new(0, 0.5, 1, 1), Transition::new(1, 0.5, 0, 0)]),
        ]);
        let mdp = b.build(0).unwrap();
        let rewards = scalarize_reward(&mdp, 0.4).unwrap();
        let pi = solve_mean_payoff(&mdp, &rewards, &SolverConfig::default()).unwrap();
        let vi = solve_mean_payoff(
            &mdp,
            &rewards,
            &SolverConfig::default().with_method(Method::RelativeValueIteration),
        )
        .unwrap();
        assert!((pi.gain - vi.gain).abs() < 1e-9);
        let iterative = solve_mean_payoff(&mdp, &rewards, &SolverConfig::default().with_dense_limit(0)).unwrap();
        assert!((pi.gain - iterative.gain).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut b = MdpBuilder::new();
        b.push_state(vec![(0, vec![t(0, 1.0)])]);
        let mdp = b.build(0).unwrap();
        assert_eq!(
            solve_mean_payoff(&mdp, &[0.0], &SolverConfig::default().with_tolerance(0.0)).unwrap_err(),
            SolverError::InvalidTolerance(0.0)
        );
        assert!(matches!(
            solve_mean_payoff(&mdp, &[], &SolverConfig::default()),
            Err(SolverError::RewardLength { .. })
        ));
    }
}
