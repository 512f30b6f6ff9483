//! Time-aware multi-armed bandits for algorithm selection, with
//! learning-curve extrapolation.
//!
//! The problem: given a fixed wallclock budget and a set of hyperparameter
//! tuners ("arms"), decide which tuner to run during each time slice so that
//! the best accuracy found by deadline is maximized. Arms are not stateless
//! slot machines — pulling one advances its tuning run, so per-arm reward
//! trajectories are non-stationary and (in envelope) non-decreasing.
//!
//! The headline policy fits a saturating curve to each arm's best-so-far
//! accuracy envelope and scores arms by the accuracy they are predicted to
//! reach if granted *all* remaining budget. Classic bandits (round robin,
//! UCB1, best-K variants) are included as baselines.
//!
//! Experiments replay recorded tuning traces instead of training real models,
//! so a full study is deterministic and runs in seconds. See the `sim` module
//! for the replay loop, `policy` for the decision rules, and `analysis` for
//! the cross-dataset rank aggregation used to compare policies.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod curve;
pub mod policy;
pub mod sim;
pub mod trace;
