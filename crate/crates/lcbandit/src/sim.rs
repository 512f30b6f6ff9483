//! The replay simulator: runs one bandit against one dataset's traces under a
//! wallclock budget.
//!
//! Time is simulated. Pulling an arm advances its execution clock by `dt`
//! seconds and reveals the trace events inside that window, so runs are
//! deterministic and orders of magnitude faster than real time. Each
//! iteration the simulator:
//!
//! 1. refreshes every arm's curve fit and extrapolated reward (forecasting
//!    policies), using the *current* remaining budget;
//! 2. asks the policy for an arm (the first `I` iterations are the Round
//!    Robin init: every arm gets one pull, in index order);
//! 3. charges the configured decision overhead against the budget — if that
//!    exhausts it, the run ends and the decision is logged unexecuted;
//! 4. executes the pull: reveals events in `(t_x, t_x + dt]`, extends the
//!    envelope and reward statistics, and subtracts `dt` from the budget.
//!
//! Charging overhead before the pull keeps the conservation guarantee
//! `sum(t_x) + overhead` in `(B - dt, B + dt]`: a decision whose overhead
//! spills past the deadline is paid for but never runs, exactly like a
//! scheduler hitting its budget mid-computation. The final pull may overshoot
//! by at most one `dt` (an arm granted an interval runs it to completion).

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{fit_arctan, monotone_envelope, push_envelope, CurveModel, EnvelopePoint, FittedCurve};
use crate::policy::{self, ArmView, BanditView, Decision, PolicySpec, Rationale};
use crate::trace::{TraceEvent, TuningTrace};

/// How decision-computation time is charged against the budget.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OverheadModel {
    /// Decisions are free.
    #[default]
    None,
    /// A constant per iteration, e.g. a typical cost of one refit.
    Fixed { seconds: f64 },
    /// Actual wall time spent computing the decision (clamped to `[0, dt]`
    /// so the conservation bound survives a slow host).
    Measured,
}

/// Everything needed to execute one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total budget `B` in seconds.
    pub budget: f64,
    /// Interval length `dt` in seconds.
    pub dt: f64,
    pub policy: PolicySpec,
    #[serde(default)]
    pub overhead: OverheadModel,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("trace/arm mismatch: {0}")]
    TraceMismatch(String),
}

impl RunConfig {
    fn validate(&self, n_arms: usize, with_init: bool) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::Config(format!("dt must be > 0 (got {})", self.dt)));
        }
        if !self.budget.is_finite() || self.budget <= 0.0 {
            return Err(SimError::Config(format!(
                "budget must be > 0 (got {})",
                self.budget
            )));
        }
        if with_init && self.budget < self.dt * n_arms as f64 {
            return Err(SimError::Config(format!(
                "budget {} cannot cover the init phase ({} arms x dt {})",
                self.budget, n_arms, self.dt
            )));
        }
        if let OverheadModel::Fixed { seconds } = self.overhead {
            if !(0.0..=self.dt).contains(&seconds) {
                return Err(SimError::Config(format!(
                    "fixed overhead {seconds} must lie in [0, dt = {}]",
                    self.dt
                )));
            }
        }
        self.policy
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Per-arm runtime record.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub arm_id: String,
    /// Seconds executed so far; always `pulls * dt`.
    pub t_x: f64,
    /// Raw trace events revealed so far.
    pub observed: Vec<TraceEvent>,
    /// Monotone envelope of `observed` (kept incrementally in sync).
    pub envelope: Vec<EnvelopePoint>,
    pub curve: FittedCurve,
    /// Pull count `n_i`.
    pub pulls: u64,
    /// Interval rewards for the baseline policies: the accuracies completed
    /// during each pulled interval, or one best-so-far entry for an empty
    /// interval.
    pub rewards: Vec<f64>,
    /// Envelope length the current `curve` was fitted on; refits are skipped
    /// while the envelope has not grown (the fit is a pure function of the
    /// envelope, so this is identical to refitting every iteration).
    fitted_len: Option<usize>,
    best: f64,
}

impl ArmState {
    fn new(arm_id: &str) -> Self {
        ArmState {
            arm_id: arm_id.to_string(),
            t_x: 0.0,
            observed: Vec::new(),
            envelope: Vec::new(),
            curve: fit_arctan(&[]).expect("empty envelope fits"),
            pulls: 0,
            rewards: Vec::new(),
            fitted_len: None,
            best: 0.0,
        }
    }

    /// Best raw accuracy observed so far (0 before any observation).
    pub fn best(&self) -> f64 {
        self.best
    }

    fn ensure_fit(&mut self) {
        if self.fitted_len != Some(self.envelope.len()) {
            self.curve = fit_arctan(&self.envelope).expect("trace events are finite");
            self.fitted_len = Some(self.envelope.len());
        }
    }

    /// Executes one `dt` interval: reveals `(t_x, t_x + dt]`, updates the
    /// envelope, and appends the interval's baseline rewards.
    fn pull(&mut self, trace: &TuningTrace, dt: f64) {
        let t_from = self.pulls as f64 * dt;
        self.pulls += 1;
        let t_to = self.pulls as f64 * dt;
        self.t_x = t_to;
        let revealed = reveal(trace, t_from, t_to);
        if revealed.is_empty() {
            // Nothing completed this interval; the arm still reports its
            // best-so-far so the baselines are not starved by long
            // evaluations (0 if nothing has ever completed).
            self.rewards.push(self.best);
        } else {
            for event in revealed {
                self.observed.push(*event);
                push_envelope(&mut self.envelope, event.t, event.accuracy);
                self.best = self.best.max(event.accuracy);
                self.rewards.push(event.accuracy);
            }
        }
        debug_assert_eq!(
            self.envelope,
            monotone_envelope(&self.observed.iter().map(|e| (e.t, e.accuracy)).collect::<Vec<_>>())
        );
    }
}

/// Compact per-arm curve snapshot stored in the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSnapshot {
    /// `(a, b, c, d)` for a full fit; absent in fallback mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<(f64, f64, f64, f64)>,
    /// Constant level; present only in fallback mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    pub residual: f64,
}

impl From<&FittedCurve> for CurveSnapshot {
    fn from(curve: &FittedCurve) -> Self {
        match curve.model {
            CurveModel::Arctan(p) => CurveSnapshot {
                params: Some((p.a, p.b, p.c, p.d)),
                level: None,
                residual: curve.residual,
            },
            CurveModel::Constant(v) => CurveSnapshot {
                params: None,
                level: Some(v),
                residual: curve.residual,
            },
        }
    }
}

/// One logged iteration: what was decided, why, and the budget state after
/// the iteration's charges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// 1-based iteration counter.
    pub iteration: u64,
    pub arm: usize,
    pub rationale: Rationale,
    #[serde(with = "policy_scores")]
    pub scores: Vec<f64>,
    /// Remaining budget after this iteration's overhead (and pull, if any).
    pub b_rem: f64,
    /// False only for a final decision whose overhead exhausted the budget
    /// before the pull could run.
    pub executed: bool,
    /// Fitted-curve snapshot per arm at decision time.
    pub curves: Vec<CurveSnapshot>,
}

// DecisionRecord reuses the score encoding of policy::Decision (infinite
// sentinels must survive JSON).
use crate::policy::score_serde as policy_scores;

/// Outcome of one run; `serde_json` form is the on-disk result format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset_id: String,
    pub policy_name: String,
    pub budget: f64,
    pub seed: u64,
    /// The run score: maximum accuracy revealed across all arms.
    pub best_accuracy: f64,
    /// Seconds of execution granted to each arm, keyed by arm id.
    pub allocations: BTreeMap<String, f64>,
    /// Total decision overhead charged.
    pub overhead: f64,
    pub decisions: Vec<DecisionRecord>,
}

impl RunResult {
    /// Canonical serialized form (compact JSON, trailing newline); used for
    /// result files and byte-identity checks.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("run result serializes");
        s.push('\n');
        s
    }

    pub fn from_json(data: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(data)
    }
}

/// Events of `trace` with `t_from < t <= t_to`, in order. Repeated calls over
/// a partition of `[0, T]` reveal each event exactly once.
pub fn reveal(trace: &TuningTrace, t_from: f64, t_to: f64) -> &[TraceEvent] {
    let lo = trace.events.partition_point(|e| e.t <= t_from);
    let hi = trace.events.partition_point(|e| e.t <= t_to);
    &trace.events[lo..hi]
}

/// Overhead charged for one decision, given the measured compute seconds.
pub fn charge_overhead(config: &RunConfig, measured: f64) -> f64 {
    match config.overhead {
        OverheadModel::None => 0.0,
        OverheadModel::Fixed { seconds } => seconds,
        OverheadModel::Measured => measured.clamp(0.0, config.dt),
    }
}

/// Executes one run with the configured policy (Round Robin init included).
pub fn run(traces: &[TuningTrace], config: &RunConfig) -> Result<RunResult, SimError> {
    Ok(run_full(traces, config)?.0)
}

/// As [`run`], also returning the final arm states for inspection.
pub fn run_full(
    traces: &[TuningTrace],
    config: &RunConfig,
) -> Result<(RunResult, Vec<ArmState>), SimError> {
    match config.overhead {
        OverheadModel::Measured => {
            let mut last = Instant::now();
            let mut lap = move || {
                let elapsed = last.elapsed().as_secs_f64();
                last = Instant::now();
                elapsed
            };
            run_with_clock(traces, config, &mut lap)
        }
        _ => run_with_clock(traces, config, &mut || 0.0),
    }
}

/// As [`run_full`] with an injected stopwatch: `lap()` returns the seconds
/// since its previous call. Lets tests drive `Measured` mode with a fake
/// clock.
pub fn run_with_clock(
    traces: &[TuningTrace],
    config: &RunConfig,
    lap: &mut dyn FnMut() -> f64,
) -> Result<(RunResult, Vec<ArmState>), SimError> {
    run_inner(traces, config, Driver::Policy, lap)
}

/// Replays a scripted pull sequence: no init phase, no policy — pull exactly
/// `sequence[k]` at iteration `k` while budget remains. Exists for oracle
/// tests that enumerate every possible allocation.
pub fn run_forced(
    traces: &[TuningTrace],
    config: &RunConfig,
    sequence: &[usize],
) -> Result<(RunResult, Vec<ArmState>), SimError> {
    run_inner(traces, config, Driver::Forced(sequence), &mut || 0.0)
}

enum Driver<'a> {
    Policy,
    Forced(&'a [usize]),
}

fn run_inner(
    traces: &[TuningTrace],
    config: &RunConfig,
    driver: Driver,
    lap: &mut dyn FnMut() -> f64,
) -> Result<(RunResult, Vec<ArmState>), SimError> {
    if traces.is_empty() {
        return Err(SimError::TraceMismatch("no traces given".into()));
    }
    let dataset_id = traces[0].dataset_id.clone();
    for t in traces {
        if t.dataset_id != dataset_id {
            return Err(SimError::TraceMismatch(format!(
                "traces span datasets {dataset_id} and {}",
                t.dataset_id
            )));
        }
    }
    for (i, t) in traces.iter().enumerate() {
        if traces[..i].iter().any(|u| u.arm_id == t.arm_id) {
            return Err(SimError::TraceMismatch(format!("duplicate arm {}", t.arm_id)));
        }
    }
    if let Driver::Forced(seq) = &driver {
        if let Some(&bad) = seq.iter().find(|&&a| a >= traces.len()) {
            return Err(SimError::TraceMismatch(format!(
                "forced sequence names arm {bad}, but only {} arms exist",
                traces.len()
            )));
        }
    }
    config.validate(traces.len(), matches!(driver, Driver::Policy))?;

    let n_arms = traces.len();
    let needs_forecast = match driver {
        Driver::Policy => config.policy.needs_forecast(),
        Driver::Forced(_) => false,
    };
    let mut arms: Vec<ArmState> = traces.iter().map(|t| ArmState::new(&t.arm_id)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut b_rem = config.budget;
    let mut total_overhead = 0.0;
    let mut pulls_total: u64 = 0;
    let mut decisions: Vec<DecisionRecord> = Vec::new();

    while b_rem > 0.0 {
        if let Driver::Forced(seq) = &driver {
            if pulls_total as usize >= seq.len() {
                break;
            }
        }

        lap(); // reset the stopwatch; decision compute starts here
        if needs_forecast {
            for arm in &mut arms {
                arm.ensure_fit();
            }
        }
        let decision = {
            let views: Vec<ArmView> = arms
                .iter()
                .map(|a| ArmView {
                    predicted_reward: if needs_forecast {
                        a.curve.extrapolate_reward(a.t_x, b_rem)
                    } else {
                        0.0
                    },
                    pulls: a.pulls,
                    rewards: &a.rewards,
                    best: a.best,
                })
                .collect();
            let view = BanditView {
                arms: views,
                total_pulls: pulls_total,
                b_rem,
                budget: config.budget,
                dt: config.dt,
            };
            match &driver {
                Driver::Forced(seq) => Decision {
                    arm: seq[pulls_total as usize],
                    rationale: Rationale::RoundRobin,
                    scores: view.arms.iter().map(|a| -(a.pulls as f64)).collect(),
                },
                Driver::Policy if (pulls_total as usize) < n_arms => {
                    // Init phase: one pull per arm in index order, so every
                    // arm has a fittable curve before the policy takes over.
                    let scores = if needs_forecast {
                        view.arms.iter().map(|a| a.predicted_reward).collect()
                    } else {
                        view.arms.iter().map(|a| -(a.pulls as f64)).collect()
                    };
                    Decision {
                        arm: pulls_total as usize,
                        rationale: Rationale::RoundRobin,
                        scores,
                    }
                }
                Driver::Policy => policy::choose(&config.policy, &view, &mut rng),
            }
        };
        let measured = lap();
        let overhead = charge_overhead(config, measured);
        b_rem -= overhead;
        total_overhead += overhead;
        let curves = arms.iter().map(|a| CurveSnapshot::from(&a.curve)).collect();

        if b_rem <= 0.0 {
            decisions.push(DecisionRecord {
                iteration: pulls_total + 1,
                arm: decision.arm,
                rationale: decision.rationale,
                scores: decision.scores,
                b_rem,
                executed: false,
                curves,
            });
            break;
        }

        arms[decision.arm].pull(&traces[decision.arm], config.dt);
        b_rem -= config.dt;
        pulls_total += 1;
        decisions.push(DecisionRecord {
            iteration: pulls_total,
            arm: decision.arm,
            rationale: decision.rationale,
            scores: decision.scores,
            b_rem,
            executed: true,
            curves,
        });
    }

    let best_accuracy = arms.iter().map(|a| a.best).fold(0.0_f64, f64::max);
    let allocations: BTreeMap<String, f64> =
        arms.iter().map(|a| (a.arm_id.clone(), a.t_x)).collect();
    let result = RunResult {
        dataset_id,
        policy_name: match driver {
            Driver::Policy => config.policy.name(),
            Driver::Forced(_) => "Forced".into(),
        },
        budget: config.budget,
        seed: config.seed,
        best_accuracy,
        allocations,
        overhead: total_overhead,
        decisions,
    };
    Ok((result, arms))
}
