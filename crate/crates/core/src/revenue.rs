//! Expected relative revenue: bisection over the reward family `r_beta`
//! and exact evaluation of a fixed strategy.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{scalarize_reward, PositionalStrategy, SparseMdp};
use crate::model::{build_model, AttackModel, AttackParams, ModelError, DEFAULT_MAX_STATES};
use crate::solver::{evaluate_strategy, solve_mean_payoff_from, GainPair, SolveResult, SolverConfig, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RevenueError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("value {0} is not in [0, 1]")]
    OutOfRange(f64),
    #[error("mean payoff is not monotone in beta: MP({lo_beta}) = {lo_mp:e} < MP({hi_beta}) = {hi_mp:e}")]
    BracketViolated {
        lo_beta: f64,
        lo_mp: f64,
        hi_beta: f64,
        hi_mp: f64,
    },
    #[error("finalization rate {0:e} is too small to form a ratio")]
    DegenerateDenominator(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl From<crate::mdp::MdpError> for RevenueError {
    fn from(e: crate::mdp::MdpError) -> Self {
        RevenueError::Solver(e.into())
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct RevenueConfig {
    pub epsilon: f64,
    pub solver: SolverConfig,
    pub max_states: usize,
}

impl Default for RevenueConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            solver: SolverConfig::default(),
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

impl RevenueConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub mp: f64,
}

#[derive(Clone, Debug)]
pub struct RevenueReport {
    pub errev_lower: f64,
    pub strategy: PositionalStrategy,
    pub epsilon: f64,
    /// Solved points in evaluation order.
    pub beta_trace: Vec<BetaPoint>,
    pub state_count: usize,
    pub solver_calls: usize,
    pub build_time_s: f64,
    pub solve_time_s: f64,
}

/// Optimal mean payoff under `r_beta`.
pub fn mp_at_beta(mdp: &SparseMdp, beta: f64, config: &SolverConfig) -> Result<SolveResult, RevenueError> {
    mp_at_beta_from(mdp, beta, config, None)
}

pub fn mp_at_beta_from(
    mdp: &SparseMdp,
    beta: f64,
    config: &SolverConfig,
    warm_start: Option<&PositionalStrategy>,
) -> Result<SolveResult, RevenueError> {
    let rewards = scalarize_reward(mdp, beta)?;
    Ok(solve_mean_payoff_from(mdp, &rewards, config, warm_start)?)
}

/// Builds the model for `params` and runs the bisection.
pub fn compute_errev(params: &AttackParams, config: &RevenueConfig) -> Result<RevenueReport, RevenueError> {
    if !(config.epsilon > 0.0 && config.epsilon.is_finite()) {
        return Err(RevenueError::InvalidEpsilon(config.epsilon));
    }
    let start = Instant::now();
    let model = build_model(params, config.max_states)?;
    let build_time_s = start.elapsed().as_secs_f64();
    let mut report = errev_for_model(&model, config)?;
    report.build_time_s = build_time_s;
    Ok(report)
}

/// Bisection on an already built model.
///
/// Keeps `MP(beta_low) >= 0` and `MP(beta_up) < 0` (or `beta_up = 1`); values
/// within `10 * tolerance` of zero count as non-negative.
pub fn errev_for_model(model: &AttackModel, config: &RevenueConfig) -> Result<RevenueReport, RevenueError> {
    if !(config.epsilon > 0.0 && config.epsilon.is_finite()) {
        return Err(RevenueError::InvalidEpsilon(config.epsilon));
    }
    let mdp = model.mdp();
    let band = 10.0 * config.solver.tolerance;
    let start = Instant::now();

    let (mut lo, mut up) = (0.0f64, 1.0f64);
    let mut at_lo: Option<SolveResult> = None;
    let mut warm: Option<PositionalStrategy> = None;
    let mut trace: Vec<BetaPoint> = Vec::new();

    let solve = |beta: f64, warm: &Option<PositionalStrategy>, trace: &mut Vec<BetaPoint>| {
        let res = mp_at_beta_from(mdp, beta, &config.solver, warm.as_ref())?;
        let point = BetaPoint { beta, mp: res.gain };
        for q in trace.iter() {
            let (a, b) = if q.beta <= beta { (*q, point) } else { (point, *q) };
            if a.mp < b.mp - band {
                return Err(RevenueError::BracketViolated {
                    lo_beta: a.beta,
                    lo_mp: a.mp,
                    hi_beta: b.beta,
                    hi_mp: b.mp,
                });
            }
        }
        trace.push(point);
        Ok::<_, RevenueError>(res)
    };

    while up - lo >= config.epsilon {
        let beta = 0.5 * (lo + up);
        let res = solve(beta, &warm, &mut trace)?;
        warm = Some(res.strategy.clone());
        if res.gain < -band {
            up = beta;
        } else {
            lo = beta;
            at_lo = Some(res);
        }
    }
    let at_lo = match at_lo {
        Some(res) => res,
        None => solve(lo, &warm, &mut trace)?,
    };
    if at_lo.gain < -band {
        return Err(RevenueError::BracketViolated {
            lo_beta: lo,
            lo_mp: at_lo.gain,
            hi_beta: lo,
            hi_mp: 0.0,
        });
    }

    Ok(RevenueReport {
        errev_lower: lo,
        strategy: at_lo.strategy,
        epsilon: config.epsilon,
        solver_calls: trace.len(),
        beta_trace: trace,
        state_count: mdp.state_count(),
        build_time_s: 0.0,
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `gain_adv / (gain_adv + gain_hon)`.
pub fn gain_ratio(gains: GainPair, tolerance: f64) -> Result<f64, RevenueError> {
    let total = gains.gain_adv + gains.gain_hon;
    if total < 10.0 * tolerance {
        return Err(RevenueError::DegenerateDenominator(total));
    }
    Ok((gains.gain_adv / total).clamp(0.0, 1.0))
}

/// Exact expected relative revenue of a fixed strategy.
pub fn exact_errev(mdp: &SparseMdp, strategy: &PositionalStrategy, tolerance: f64) -> Result<f64, RevenueError> {
    gain_ratio(evaluate_strategy(mdp, strategy, tolerance)?, tolerance)
}

pub fn chain_quality(errev: f64) -> Result<f64, RevenueError> {
    if !(0.0..=1.0).contains(&errev) {
        return Err(RevenueError::OutOfRange(errev));
    }
    Ok(1.0 - errev)
}
