//! Selfish-mining analysis for longest-chain blockchains whose mining is
//! cheap to repeat (efficient proof systems, nothing-at-stake).
//!
//! The crate builds a finite MDP of an adversary that keeps up to `f`
//! private forks on each of the `d` most recent public blocks, finds the
//! strategy maximizing the adversary's share of finalized blocks, and checks
//! the result against simple baselines and an independent simulator.
//!
//! ```
//! use nasmine_core::model::AttackParams;
//! use nasmine_core::revenue::{compute_errev, RevenueConfig};
//!
//! let params = AttackParams::new(0.3, 0.5, 1, 1, 2).unwrap();
//! let report = compute_errev(&params, &RevenueConfig::default()).unwrap();
//! assert!(report.errev_lower >= 0.3 - report.epsilon);
//! ```

pub mod baselines;
pub mod mdp;
pub mod model;
pub mod par;
pub mod revenue;
pub mod sim;
pub mod solver;
pub mod strategy_file;
pub mod sweep;
