//! Arm-selection rules: the learning-curve forecasting bandit in three
//! variants, plus the classic baselines it is compared against.
//!
//! All policies consume a [`BanditView`] — a read-only snapshot of per-arm
//! statistics plus global budget state — and return a [`Decision`]. The
//! forecasting variants rank arms by predicted end-of-budget reward `r`:
//!
//! * V1 (`MasterLC-e1-e2`): double epsilon-greedy — greedy on `r` with
//!   probability `1-(e1+e2)`, the runner-up with probability `e1`, a uniform
//!   arm with probability `e2`.
//! * V2 (`MasterLCDecay`): epsilon-greedy with `e` decaying linearly from 1
//!   to 0 as budget is spent.
//! * V3 (`MasterLC-UCB-rho`): deterministic argmax of `r` plus an upper
//!   confidence bonus `rho * sqrt(2 ln n / ln n_i)`.
//!
//! Baselines ignore forecasts and use observed interval rewards: UCB1,
//! BestK-Rewards (mean of the top K accuracies), BestK-Velocity (mean
//! increment among the top K), and plain Round Robin.
//!
//! Every tie, everywhere, is broken toward the lowest arm index, which makes
//! each policy a deterministic function of (view, random stream).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which bandit to run, with its parameters. Constructed from the experiment
/// config; see [`PolicySpec::name`] for the canonical output labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    RoundRobin,
    Ucb1,
    BestKRewards { k: usize },
    BestKVelocity { k: usize },
    MasterLc { eps1: f64, eps2: f64 },
    MasterLcDecay,
    MasterLcUcb { rho: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("eps1 + eps2 must be <= 1 and each in [0, 1] (got {eps1} and {eps2})")]
    BadEpsilons { eps1: f64, eps2: f64 },
    #[error("rho must be a finite non-negative number (got {0})")]
    BadRho(f64),
    #[error("k must be >= 1")]
    BadK,
}

impl PolicySpec {
    /// Canonical policy label used in file names, result records, and
    /// reports, e.g. `MasterLC-0.1-0.1`, `MasterLC-UCB-0.05`, `BestKReward-7`.
    pub fn name(&self) -> String {
        match self {
            PolicySpec::RoundRobin => "RoundRobin".into(),
            PolicySpec::Ucb1 => "UCB".into(),
            PolicySpec::BestKRewards { k } => format!("BestKReward-{k}"),
            PolicySpec::BestKVelocity { k } => format!("BestKVelocity-{k}"),
            PolicySpec::MasterLc { eps1, eps2 } => format!("MasterLC-{eps1}-{eps2}"),
            PolicySpec::MasterLcDecay => "MasterLCDecay".into(),
            PolicySpec::MasterLcUcb { rho } => format!("MasterLC-UCB-{rho}"),
        }
    }

    /// Whether decisions depend on extrapolated rewards (so the simulator
    /// must maintain curve fits).
    pub fn needs_forecast(&self) -> bool {
        matches!(
            self,
            PolicySpec::MasterLc { .. } | PolicySpec::MasterLcDecay | PolicySpec::MasterLcUcb { .. }
        )
    }

    /// Whether the policy draws from the random stream.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, PolicySpec::MasterLc { .. } | PolicySpec::MasterLcDecay)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            PolicySpec::MasterLc { eps1, eps2 } => {
                let ok = (0.0..=1.0).contains(&eps1)
                    && (0.0..=1.0).contains(&eps2)
                    && eps1 + eps2 <= 1.0;
                if ok {
                    Ok(())
                } else {
                    Err(PolicyError::BadEpsilons { eps1, eps2 })
                }
            }
            PolicySpec::MasterLcUcb { rho } => {
                if rho.is_finite() && rho >= 0.0 {
                    Ok(())
                } else {
                    Err(PolicyError::BadRho(rho))
                }
            }
            PolicySpec::BestKRewards { k } | PolicySpec::BestKVelocity { k } => {
                if k >= 1 {
                    Ok(())
                } else {
                    Err(PolicyError::BadK)
                }
            }
            _ => Ok(()),
        }
    }
}

/// Per-arm statistics as seen by a policy at one decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmView<'a> {
    /// Extrapolated end-of-budget reward `r` (forecasting policies).
    pub predicted_reward: f64,
    /// Pull count `n_i`.
    pub pulls: u64,
    /// Interval rewards observed so far (baseline policies).
    pub rewards: &'a [f64],
    /// Best raw accuracy observed so far.
    pub best: f64,
}

/// Snapshot handed to a policy: all arms plus global budget state.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditView<'a> {
    pub arms: Vec<ArmView<'a>>,
    /// Total pulls across arms, `n`.
    pub total_pulls: u64,
    pub b_rem: f64,
    pub budget: f64,
    pub dt: f64,
}

/// Why an arm was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    Greedy,
    RunnerUp,
    Random,
    UcbBonus,
    RoundRobin,
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rationale::Greedy => "greedy",
            Rationale::RunnerUp => "runner_up",
            Rationale::Random => "random",
            Rationale::UcbBonus => "ucb_bonus",
            Rationale::RoundRobin => "round_robin",
        })
    }
}

/// One policy decision: the chosen arm, why, and the per-arm action values
/// that informed it (maximized; Round Robin stores negated pull counts so the
/// argmax convention holds for it too).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub arm: usize,
    pub rationale: Rationale,
    #[serde(with = "score_serde")]
    pub scores: Vec<f64>,
}

/// Serializes scores so that non-finite values survive JSON round-trips
/// (serde_json writes bare infinities as null). Infinite scores are real:
/// they are the forced-arm sentinel.
pub(crate) mod score_serde {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(serde::Serialize, Deserialize)]
    #[serde(untagged)]
    enum Score {
        Finite(f64),
        Tagged(String),
    }

    pub fn serialize<S: Serializer>(scores: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let encoded: Vec<Score> = scores
            .iter()
            .map(|&s| {
                if s.is_finite() {
                    Score::Finite(s)
                } else if s == f64::INFINITY {
                    Score::Tagged("inf".into())
                } else if s == f64::NEG_INFINITY {
                    Score::Tagged("-inf".into())
                } else {
                    Score::Tagged("nan".into())
                }
            })
            .collect();
        serde::Serialize::serialize(&encoded, ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let encoded: Vec<Score> = Deserialize::deserialize(de)?;
        encoded
            .into_iter()
            .map(|s| match s {
                Score::Finite(v) => Ok(v),
                Score::Tagged(t) => match t.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(D::Error::custom(format!("bad score tag {other:?}"))),
                },
            })
            .collect()
    }
}

/// Index of the maximum score; ties go to the lowest index.
pub fn argmax_lowest_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i].total_cmp(&scores[best]) == std::cmp::Ordering::Greater {
            best = i;
        }
    }
    best
}

/// First and second arm in the stable ordering by (score descending, index
/// ascending). With a single arm, both are that arm.
pub fn greedy_and_runner_up(scores: &[f64]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let greedy = order[0];
    let runner = if order.len() > 1 { order[1] } else { order[0] };
    (greedy, runner)
}

fn forecast_scores(view: &BanditView) -> Vec<f64> {
    view.arms.iter().map(|a| a.predicted_reward).collect()
}

/// Variant 1: double epsilon-greedy over predicted rewards. One uniform draw
/// selects the branch: greedy with probability `1-(eps1+eps2)`, runner-up
/// with probability `eps1`, a uniformly random arm with probability `eps2`.
pub fn choose_double_epsilon<R: Rng>(view: &BanditView, eps1: f64, eps2: f64, rng: &mut R) -> Decision {
    let scores = forecast_scores(view);
    if view.arms.len() == 1 {
        return Decision { arm: 0, rationale: Rationale::Greedy, scores };
    }
    let (greedy, runner) = greedy_and_runner_up(&scores);
    let u: f64 = rng.gen();
    let (arm, rationale) = if u < 1.0 - (eps1 + eps2) {
        (greedy, Rationale::Greedy)
    } else if u < 1.0 - eps2 {
        (runner, Rationale::RunnerUp)
    } else {
        (rng.gen_range(0..view.arms.len()), Rationale::Random)
    };
    Decision { arm, rationale, scores }
}

/// Variant 2: epsilon-greedy with the exploration probability decaying
/// linearly over the budget, `eps_t = max(0, 1 - elapsed/B)`.
pub fn choose_decaying_epsilon<R: Rng>(view: &BanditView, rng: &mut R) -> Decision {
    let scores = forecast_scores(view);
    if view.arms.len() == 1 {
        return Decision { arm: 0, rationale: Rationale::Greedy, scores };
    }
    let elapsed = view.budget - view.b_rem;
    let eps_t = if view.budget > 0.0 {
        (1.0 - elapsed / view.budget).max(0.0)
    } else {
        0.0
    };
    let u: f64 = rng.gen();
    let (arm, rationale) = if u < eps_t {
        (rng.gen_range(0..view.arms.len()), Rationale::Random)
    } else {
        (argmax_lowest_index(&scores), Rationale::Greedy)
    };
    Decision { arm, rationale, scores }
}

/// The upper-confidence adjustment of Variant 3: returns
/// `r + rho * sqrt(2 ln n / ln n_i)`.
///
/// `rho = 0` returns `r` exactly (checked first, so the zero-scale policy is
/// plain greedy even on barely-pulled arms). Otherwise `n_i <= 1` makes the
/// denominator vanish; those arms get an infinite score and are forced,
/// giving every arm a second pull before the bonus is comparable.
pub fn ucb_bonus(r: f64, n: u64, n_i: u64, rho: f64) -> f64 {
    if rho == 0.0 {
        return r;
    }
    if n_i <= 1 {
        return f64::INFINITY;
    }
    r + rho * (2.0 * (n as f64).ln() / (n_i as f64).ln()).sqrt()
}

/// Variant 3: deterministic argmax of the bonus-adjusted predicted rewards.
pub fn choose_ucb_forecast(view: &BanditView, rho: f64) -> Decision {
    let scores: Vec<f64> = view
        .arms
        .iter()
        .map(|a| ucb_bonus(a.predicted_reward, view.total_pulls, a.pulls, rho))
        .collect();
    Decision {
        arm: argmax_lowest_index(&scores),
        rationale: Rationale::UcbBonus,
        scores,
    }
}

/// Exploration term shared by the baselines: `sqrt(2 ln n / n_i)`, infinite
/// for an unpulled arm so it is tried first.
fn baseline_bonus(n: u64, n_i: u64) -> f64 {
    if n_i == 0 {
        return f64::INFINITY;
    }
    (2.0 * (n as f64).ln() / n_i as f64).sqrt()
}

/// Standard UCB1 over observed interval rewards.
pub fn choose_ucb1(view: &BanditView) -> Decision {
    let scores: Vec<f64> = view
        .arms
        .iter()
        .map(|a| {
            let bonus = baseline_bonus(view.total_pulls, a.pulls);
            if bonus.is_infinite() {
                bonus
            } else {
                mean(a.rewards) + bonus
            }
        })
        .collect();
    Decision {
        arm: argmax_lowest_index(&scores),
        rationale: Rationale::UcbBonus,
        scores,
    }
}

/// Scoring mode for the BestK baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestKMode {
    Rewards,
    Velocity,
}

/// Mean of the top `min(k, len)` rewards; 0 for an empty history.
pub fn top_k_mean(rewards: &[f64], k: usize) -> f64 {
    let top = top_k(rewards, k);
    mean(&top)
}

/// Mean of the consecutive differences among the top `min(k, len)` rewards
/// sorted ascending; 0 with fewer than two values.
pub fn top_k_velocity(rewards: &[f64], k: usize) -> f64 {
    let mut top = top_k(rewards, k);
    if top.len() < 2 {
        return 0.0;
    }
    top.reverse(); // descending -> ascending
    let diffs: Vec<f64> = top.windows(2).map(|w| w[1] - w[0]).collect();
    mean(&diffs)
}

/// BestK baselines: top-K mean (rewards mode) or top-K increment mean
/// (velocity mode), plus the UCB1 exploration term.
pub fn choose_best_k(view: &BanditView, k: usize, mode: BestKMode) -> Decision {
    let scores: Vec<f64> = view
        .arms
        .iter()
        .map(|a| {
            let bonus = baseline_bonus(view.total_pulls, a.pulls);
            if bonus.is_infinite() {
                return bonus;
            }
            let value = match mode {
                BestKMode::Rewards => top_k_mean(a.rewards, k),
                BestKMode::Velocity => top_k_velocity(a.rewards, k),
            };
            value + bonus
        })
        .collect();
    Decision {
        arm: argmax_lowest_index(&scores),
        rationale: Rationale::UcbBonus,
        scores,
    }
}

/// Round Robin: the least-pulled arm, lowest index first — which continues
/// the cyclic arm order the init phase starts.
pub fn choose_round_robin(view: &BanditView) -> Decision {
    let scores: Vec<f64> = view.arms.iter().map(|a| -(a.pulls as f64)).collect();
    Decision {
        arm: argmax_lowest_index(&scores),
        rationale: Rationale::RoundRobin,
        scores,
    }
}

/// Dispatches to the concrete rule for `spec`.
pub fn choose<R: Rng>(spec: &PolicySpec, view: &BanditView, rng: &mut R) -> Decision {
    match *spec {
        PolicySpec::RoundRobin => choose_round_robin(view),
        PolicySpec::Ucb1 => choose_ucb1(view),
        PolicySpec::BestKRewards { k } => choose_best_k(view, k, BestKMode::Rewards),
        PolicySpec::BestKVelocity { k } => choose_best_k(view, k, BestKMode::Velocity),
        PolicySpec::MasterLc { eps1, eps2 } => choose_double_epsilon(view, eps1, eps2, rng),
        PolicySpec::MasterLcDecay => choose_decaying_epsilon(view, rng),
        PolicySpec::MasterLcUcb { rho } => choose_ucb_forecast(view, rho),
    }
}

fn top_k(rewards: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = rewards.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(k);
    sorted
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
