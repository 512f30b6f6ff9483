//! Learning-curve envelopes and saturating-curve fits.
//!
//! An arm's *learning curve* is the monotone envelope of its evaluation
//! accuracies against cumulative execution time: the subsequence of
//! evaluations that strictly improved on everything before them. The envelope
//! is what the forecasting policy extrapolates.
//!
//! The fitted model is `y(x) = a * atan(b * (x + c)) + d` with `a, b >= 0`,
//! which saturates at `d + a*pi/2` and is monotone non-decreasing — matching
//! the qualitative properties every envelope has. Fitting is least squares
//! via a small hand-rolled Levenberg–Marquardt with an analytic Jacobian and
//! multi-start initialization; with fewer than four points (or if no start
//! converges) the fit degrades to a constant at the last observed value.

use thiserror::Error;

/// One envelope point: a new best accuracy `y` reached at cumulative time `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("non-finite envelope point (x={x}, y={y})")]
    NonFinite { x: f64, y: f64 },
}

/// Extracts the monotone envelope of `(time, accuracy)` observations.
///
/// Input must be sorted ascending by time. Output keeps exactly the
/// observations that strictly exceed every earlier accuracy, so both `x` and
/// `y` are strictly increasing. Idempotent.
pub fn monotone_envelope(events: &[(f64, f64)]) -> Vec<EnvelopePoint> {
    let mut env = Vec::new();
    for &(x, y) in events {
        push_envelope(&mut env, x, y);
    }
    env
}

/// Appends one observation to an envelope under construction, keeping it only
/// if it is a strict record. Returns true when the envelope grew.
pub fn push_envelope(env: &mut Vec<EnvelopePoint>, x: f64, y: f64) -> bool {
    let record = env.last().map_or(true, |last| y > last.y);
    if record {
        env.push(EnvelopePoint { x, y });
    }
    record
}

/// Parameters of the saturating model `a * atan(b * (x + c)) + d`.
///
/// `a >= 0` and `b >= 0` keep the curve non-decreasing
/// (`dy/dx = a*b / (1 + (b(x+c))^2) >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CurveParams {
    /// Raw model value, without the [0, 1] clamp applied by prediction.
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * (x + self.c)).atan() + self.d
    }
}

/// The model backing a fitted curve: the full four-parameter fit, or a
/// constant when the envelope was too short or the solver failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveModel {
    Arctan(CurveParams),
    Constant(f64),
}

/// Outcome of fitting an envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedCurve {
    pub model: CurveModel,
    /// Number of envelope points the fit consumed.
    pub n_points: usize,
    /// Root-mean-square residual of the returned model over those points.
    pub residual: f64,
}

impl FittedCurve {
    pub fn is_fallback(&self) -> bool {
        matches!(self.model, CurveModel::Constant(_))
    }

    /// Predicted accuracy at cumulative time `x`, clamped to [0, 1].
    ///
    /// The clamp is applied to the model output, not the parameters, so the
    /// fit itself is unconstrained in `c` and `d`.
    pub fn predict(&self, x: f64) -> f64 {
        match self.model {
            CurveModel::Arctan(p) => p.eval(x).clamp(0.0, 1.0),
            CurveModel::Constant(v) => v.clamp(0.0, 1.0),
        }
    }

    /// Predicted reward if the arm received all remaining budget: the curve
    /// evaluated at `t_x + b_rem`.
    pub fn extrapolate_reward(&self, t_x: f64, b_rem: f64) -> f64 {
        self.predict(t_x + b_rem)
    }
}

/// Minimum number of envelope points for a four-parameter fit.
const MIN_FIT_POINTS: usize = 4;
const MAX_ITERS: usize = 200;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_UP: f64 = 10.0;
const LAMBDA_DOWN: f64 = 0.1;
const LAMBDA_MAX: f64 = 1e12;
/// Relative tolerance on both the parameter step and the residual decrease.
const TOL: f64 = 1e-8;
/// Floor on the damping diagonal, guarding flat Jacobian columns (a = 0
/// zeroes two of them).
const DIAG_FLOOR: f64 = 1e-12;
/// A start whose sum of squares drops below this is accepted immediately.
const SSE_EXACT: f64 = 1e-20;

/// Fits the arctan model to an envelope by damped least squares.
///
/// Runs Levenberg–Marquardt from five starts — a heuristic base guess
/// `(a, b, c, d) = (2 * y_range / pi, 1 / x_span, -x_first, y_mean)` plus the
/// four combinations of halving/doubling `a` and `b` — and keeps the lowest
/// sum of squared residuals. Negative `a` or `b` proposals are projected back
/// to zero after each step. Returns the constant fallback (level = last
/// envelope `y`, or 0 for an empty envelope) when fewer than four points are
/// available or no start yields a finite fit.
pub fn fit_arctan(env: &[EnvelopePoint]) -> Result<FittedCurve, CurveError> {
    for p in env {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(CurveError::NonFinite { x: p.x, y: p.y });
        }
    }
    if env.len() < MIN_FIT_POINTS {
        return Ok(fallback(env));
    }

    let x0 = env[0].x;
    let x_span = env[env.len() - 1].x - x0;
    let b0 = if x_span > 0.0 { 1.0 / x_span } else { 1.0 };
    let (mut y_min, mut y_max, mut y_sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for p in env {
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
        y_sum += p.y;
    }
    let a0 = 2.0 * (y_max - y_min) / std::f64::consts::PI;
    let base = CurveParams {
        a: a0,
        b: b0,
        c: -x0,
        d: y_sum / env.len() as f64,
    };
    let starts = [
        base,
        CurveParams { a: 0.5 * a0, b: 0.5 * b0, ..base },
        CurveParams { a: 0.5 * a0, b: 2.0 * b0, ..base },
        CurveParams { a: 2.0 * a0, b: 0.5 * b0, ..base },
        CurveParams { a: 2.0 * a0, b: 2.0 * b0, ..base },
    ];

    let mut best: Option<(CurveParams, f64)> = None;
    for start in starts {
        if let Some((params, sse)) = levenberg_marquardt(env, start) {
            if best.map_or(true, |(_, b_sse)| sse < b_sse) {
                best = Some((params, sse));
            }
            if sse <= SSE_EXACT {
                break;
            }
        }
    }
    Ok(match best {
        Some((params, sse)) => FittedCurve {
            model: CurveModel::Arctan(params),
            n_points: env.len(),
            residual: (sse / env.len() as f64).sqrt(),
        },
        None => fallback(env),
    })
}

/// Constant fit at the last envelope value (0 when the envelope is empty).
fn fallback(env: &[EnvelopePoint]) -> FittedCurve {
    let value = env.last().map_or(0.0, |p| p.y);
    let residual = if env.is_empty() {
        0.0
    } else {
        let sse: f64 = env.iter().map(|p| (p.y - value).powi(2)).sum();
        (sse / env.len() as f64).sqrt()
    };
    FittedCurve {
        model: CurveModel::Constant(value),
        n_points: env.len(),
        residual,
    }
}

fn sse(env: &[EnvelopePoint], p: &CurveParams) -> f64 {
    env.iter().map(|pt| (p.eval(pt.x) - pt.y).powi(2)).sum()
}

fn project(mut p: CurveParams) -> CurveParams {
    p.a = p.a.max(0.0);
    p.b = p.b.max(0.0);
    p
}

/// One Levenberg–Marquardt run. Returns the final parameters and their sum of
/// squared residuals, or `None` if the start never produced a finite value.
fn levenberg_marquardt(env: &[EnvelopePoint], start: CurveParams) -> Option<(CurveParams, f64)> {
    let mut p = project(start);
    let mut current_sse = sse(env, &p);
    if !current_sse.is_finite() {
        return None;
    }
    let mut lambda = LAMBDA_INIT;

    for _ in 0..MAX_ITERS {
        // Normal equations J'J and J'r for residuals r_i = f(x_i) - y_i.
        let mut jtj = [[0.0_f64; 4]; 4];
        let mut jtr = [0.0_f64; 4];
        for pt in env {
            let u = p.b * (pt.x + p.c);
            let denom = 1.0 + u * u;
            let row = [
                u.atan(),                   // df/da
                p.a * (pt.x + p.c) / denom, // df/db
                p.a * p.b / denom,          // df/dc
                1.0,                        // df/dd
            ];
            let r = p.eval(pt.x) - pt.y;
            for i in 0..4 {
                jtr[i] += row[i] * r;
                for j in 0..4 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }

        let mut damped = jtj;
        for i in 0..4 {
            damped[i][i] += lambda * jtj[i][i].max(DIAG_FLOOR);
        }
        let rhs = [-jtr[0], -jtr[1], -jtr[2], -jtr[3]];
        let Some(delta) = solve4(damped, rhs) else {
            lambda *= LAMBDA_UP;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };

        let candidate = project(CurveParams {
            a: p.a + delta[0],
            b: p.b + delta[1],
            c: p.c + delta[2],
            d: p.d + delta[3],
        });
        let candidate_sse = sse(env, &candidate);

        // Step size is measured after projection: a proposal outside the
        // feasible region that projects back onto the current point is a
        // stall, not progress.
        let step = [
            candidate.a - p.a,
            candidate.b - p.b,
            candidate.c - p.c,
            candidate.d - p.d,
        ];
        let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        let p_norm = [p.a, p.b, p.c, p.d]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let small_step = step_norm <= TOL * (p_norm + TOL);

        if candidate_sse.is_finite() && candidate_sse < current_sse {
            let decrease = (current_sse - candidate_sse) / current_sse.max(f64::MIN_POSITIVE);
            p = candidate;
            current_sse = candidate_sse;
            lambda *= LAMBDA_DOWN;
            if small_step || decrease < TOL || current_sse <= SSE_EXACT {
                break;
            }
        } else {
            lambda *= LAMBDA_UP;
            if small_step || lambda > LAMBDA_MAX {
                break;
            }
        }
    }
    Some((p, current_sse))
}

/// Solves a 4x4 linear system by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0_f64; 4];
    for row in (0..4).rev() {
        let mut sum = b[row];
        for k in row + 1..4 {
            sum -= a[row][k] * x[k];
        }
        x[row] = sum / a[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}
