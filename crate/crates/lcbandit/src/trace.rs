//! Tuning traces: the replayable ground truth.
//!
//! A trace is the recorded output of one hyperparameter tuner working on one
//! dataset: a time-stamped sequence of test accuracies. The simulator replays
//! traces instead of training real learners, so every experiment is
//! deterministic and much faster than wallclock.
//!
//! Traces are interchanged as CSV (`dataset_id,arm_id,elapsed_seconds,accuracy`,
//! header required) or as JSON (an array of `{dataset_id, arm_id, events}`
//! objects). Within a dataset, arms are ordered by `arm_id` (ascending); that
//! order defines the arm index used by the simulator and the policies.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One recorded evaluation: the tuner reached `accuracy` after `t` seconds of
/// cumulative execution time on its arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub accuracy: f64,
}

/// The full recorded history of one arm (tuner) on one dataset.
///
/// Events are sorted strictly ascending by `t`. Accuracies are raw evaluation
/// scores and need not be monotone; the monotone envelope is computed
/// downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    pub dataset_id: String,
    pub arm_id: String,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("invalid value at {path}:{line}: {msg}")]
    Domain { path: String, line: u64, msg: String },
    #[error("dataset {dataset_id} arm {arm_id}: {msg}")]
    Invalid {
        dataset_id: String,
        arm_id: String,
        msg: String,
    },
    #[error("synthetic spec invalid: {0}")]
    Spec(String),
    #[error("unsupported trace format for {0} (expected .csv or .json)")]
    Format(String),
}

/// Traces grouped by dataset, with arms in `arm_id` order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSet {
    datasets: BTreeMap<String, Vec<TuningTrace>>,
}

impl TraceSet {
    /// Groups loose traces by dataset, sorts events and arms, and validates.
    ///
    /// Events are sorted by `t`; duplicate timestamps within an arm are
    /// rejected rather than merged, since replay needs a strict order.
    pub fn from_traces(traces: Vec<TuningTrace>) -> Result<Self, TraceError> {
        let mut datasets: BTreeMap<String, Vec<TuningTrace>> = BTreeMap::new();
        for mut trace in traces {
            trace
                .events
                .sort_by(|a, b| a.t.total_cmp(&b.t));
            validate_trace(&trace)?;
            let group = datasets.entry(trace.dataset_id.clone()).or_default();
            if group.iter().any(|t| t.arm_id == trace.arm_id) {
                return Err(TraceError::Invalid {
                    dataset_id: trace.dataset_id,
                    arm_id: trace.arm_id,
                    msg: "duplicate arm".into(),
                });
            }
            group.push(trace);
        }
        for group in datasets.values_mut() {
            group.sort_by(|a, b| a.arm_id.cmp(&b.arm_id));
        }
        Ok(Self { datasets })
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn get(&self, dataset_id: &str) -> Option<&[TuningTrace]> {
        self.datasets.get(dataset_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[TuningTrace])> {
        self.datasets
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    /// Loads traces from a `.csv` or `.json` file, inferring the format from
    /// the extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::load_csv(path),
            Some("json") => Self::load_json(path),
            _ => Err(TraceError::Format(path.display().to_string())),
        }
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_error(&pstr, e))?;
        {
            let headers = reader.headers().map_err(|e| csv_error(&pstr, e))?;
            let expected = ["dataset_id", "arm_id", "elapsed_seconds", "accuracy"];
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(TraceError::Parse {
                    path: pstr,
                    line: 1,
                    msg: format!(
                        "bad header {:?}, expected {:?}",
                        headers.iter().collect::<Vec<_>>(),
                        expected
                    ),
                });
            }
        }
        let mut traces: Vec<TuningTrace> = Vec::new();
        let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&pstr, e))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 4 {
                return Err(TraceError::Parse {
                    path: pstr,
                    line,
                    msg: format!("expected 4 fields, got {}", record.len()),
                });
            }
            let dataset_id = record[0].to_string();
            let arm_id = record[1].to_string();
            let t = parse_f64(&record[2], "elapsed_seconds", &pstr, line)?;
            let accuracy = parse_f64(&record[3], "accuracy", &pstr, line)?;
            check_event_domain(t, accuracy, &pstr, line)?;
            let key = (dataset_id.clone(), arm_id.clone());
            let idx = *index.entry(key).or_insert_with(|| {
                traces.push(TuningTrace {
                    dataset_id,
                    arm_id,
                    events: Vec::new(),
                });
                traces.len() - 1
            });
            traces[idx].events.push(TraceEvent { t, accuracy });
        }
        Self::from_traces(traces)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let data = fs::read_to_string(path).map_err(|e| TraceError::Io {
            path: pstr.clone(),
            source: e,
        })?;
        let traces: Vec<TuningTrace> =
            serde_json::from_str(&data).map_err(|e| TraceError::Parse {
                path: pstr.clone(),
                line: e.line() as u64,
                msg: e.to_string(),
            })?;
        for trace in &traces {
            for event in &trace.events {
                if !(event.accuracy >= 0.0 && event.accuracy <= 1.0) || !(event.t >= 0.0) {
                    return Err(TraceError::Invalid {
                        dataset_id: trace.dataset_id.clone(),
                        arm_id: trace.arm_id.clone(),
                        msg: format!(
                            "event out of domain: t={}, accuracy={}",
                            event.t, event.accuracy
                        ),
                    });
                }
            }
        }
        Self::from_traces(traces)
    }

    /// Saves to `.csv` or `.json` by extension. Values round-trip exactly:
    /// floats are written in shortest form that parses back to the same bits.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.save_csv(path),
            Some("json") => self.save_json(path),
            _ => Err(TraceError::Format(path.display().to_string())),
        }
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let io_err = |e| TraceError::Io {
            path: pstr.clone(),
            source: e,
        };
        let mut out = String::from("dataset_id,arm_id,elapsed_seconds,accuracy\n");
        for group in self.datasets.values() {
            for trace in group {
                for event in &trace.events {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        trace.dataset_id, trace.arm_id, event.t, event.accuracy
                    ));
                }
            }
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(out.as_bytes()).map_err(io_err)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let traces: Vec<&TuningTrace> = self.datasets.values().flatten().collect();
        let data = serde_json::to_string_pretty(&traces).expect("traces serialize");
        fs::write(path, data + "\n").map_err(|e| TraceError::Io {
            path: pstr,
            source: e,
        })
    }
}

fn validate_trace(trace: &TuningTrace) -> Result<(), TraceError> {
    let invalid = |msg: String| TraceError::Invalid {
        dataset_id: trace.dataset_id.clone(),
        arm_id: trace.arm_id.clone(),
        msg,
    };
    for event in &trace.events {
        if !event.t.is_finite() || event.t < 0.0 {
            return Err(invalid(format!("event time {} out of domain", event.t)));
        }
        if !event.accuracy.is_finite() || !(0.0..=1.0).contains(&event.accuracy) {
            return Err(invalid(format!(
                "accuracy {} outside [0, 1]",
                event.accuracy
            )));
        }
    }
    for pair in trace.events.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(invalid(format!("duplicate timestamp t={}", pair[1].t)));
        }
    }
    Ok(())
}

fn check_event_domain(t: f64, accuracy: f64, path: &str, line: u64) -> Result<(), TraceError> {
    if !t.is_finite() || t < 0.0 {
        return Err(TraceError::Domain {
            path: path.to_string(),
            line,
            msg: format!("elapsed_seconds {t} must be a finite non-negative number"),
        });
    }
    if !accuracy.is_finite() || !(0.0..=1.0).contains(&accuracy) {
        return Err(TraceError::Domain {
            path: path.to_string(),
            line,
            msg: format!("accuracy {accuracy} outside [0, 1]"),
        });
    }
    Ok(())
}

fn parse_f64(field: &str, name: &str, path: &str, line: u64) -> Result<f64, TraceError> {
    field.trim().parse().map_err(|_| TraceError::Parse {
        path: path.to_string(),
        line,
        msg: format!("field {name}: cannot parse {field:?} as a number"),
    })
}

fn csv_error(path: &str, e: csv::Error) -> TraceError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    TraceError::Parse {
        path: path.to_string(),
        line,
        msg: e.to_string(),
    }
}

/// Ground-truth curve of one synthetic arm: exponential saturation
/// `asymptote * (1 - exp(-rate * max(0, t - delay)))`.
///
/// This family satisfies the properties assumed of a learning curve (monotone,
/// saturating, values in [0, 1]) while being distinct from the model the
/// fitter uses, so fitting is exercised under model mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCurve {
    pub asymptote: f64,
    pub rate: f64,
    #[serde(default)]
    pub delay: f64,
}

impl GroundTruthCurve {
    pub fn value(&self, t: f64) -> f64 {
        self.asymptote * (1.0 - (-self.rate * (t - self.delay).max(0.0)).exp())
    }
}

/// Recipe for one reproducible synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dataset_id: String,
    /// One ground-truth curve per arm; arm ids become `arm00`, `arm01`, ...
    pub arms: Vec<GroundTruthCurve>,
    /// Generation horizon in seconds; no event is emitted past it.
    pub horizon: f64,
    /// Mean gap between evaluation completions (exponential inter-arrival).
    pub mean_gap: f64,
    /// Symmetric uniform noise added to each score before clamping to [0, 1].
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let fail = |msg: String| Err(TraceError::Spec(msg));
        if self.arms.is_empty() {
            return fail("at least one arm required".into());
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if !(0.0..=1.0).contains(&arm.asymptote) || !arm.asymptote.is_finite() {
                return fail(format!("arm {i}: asymptote {} outside [0, 1]", arm.asymptote));
            }
            if !(arm.rate > 0.0) || !arm.rate.is_finite() {
                return fail(format!("arm {i}: rate {} must be > 0", arm.rate));
            }
            if !(arm.delay >= 0.0) || !arm.delay.is_finite() {
                return fail(format!("arm {i}: delay {} must be >= 0", arm.delay));
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail(format!("horizon {} must be > 0", self.horizon));
        }
        if !(self.mean_gap > 0.0) || !self.mean_gap.is_finite() {
            return fail(format!("mean_gap {} must be > 0", self.mean_gap));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return fail(format!("noise {} must be >= 0", self.noise));
        }
        Ok(())
    }
}

/// Evaluations land at or below the current curve potential; the shortfall is
/// drawn uniformly from this factor range.
const SHORTFALL_MIN: f64 = 0.7;
/// Floor on inter-arrival gaps, keeping timestamps strictly increasing.
const MIN_GAP: f64 = 1e-9;

/// Generates one trace per arm, deterministically from the recipe.
///
/// Event times follow an exponential arrival process with the configured mean
/// gap; each score is the ground-truth value damped by a random shortfall,
/// plus uniform noise, clamped to [0, 1]. The same spec always produces the
/// identical trace set.
pub fn generate_traces(spec: &SyntheticSpec) -> Result<Vec<TuningTrace>, TraceError> {
    spec.validate()?;
    let arrivals = Exp::new(1.0 / spec.mean_gap).expect("mean_gap validated");
    let mut traces = Vec::with_capacity(spec.arms.len());
    for (idx, arm) in spec.arms.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, idx as u64));
        let mut events = Vec::new();
        let mut t = 0.0_f64;
        loop {
            let gap: f64 = arrivals.sample(&mut rng);
            let next = t + gap.max(MIN_GAP);
            if next > spec.horizon || next <= t {
                break;
            }
            t = next;
            let shortfall = rng.gen_range(SHORTFALL_MIN..=1.0);
            let noise = if spec.noise > 0.0 {
                rng.gen_range(-spec.noise..=spec.noise)
            } else {
                0.0
            };
            let accuracy = (arm.value(t) * shortfall + noise).clamp(0.0, 1.0);
            events.push(TraceEvent { t, accuracy });
        }
        traces.push(TuningTrace {
            dataset_id: spec.dataset_id.clone(),
            arm_id: format!("arm{idx:02}"),
            events,
        });
    }
    Ok(traces)
}

/// splitmix64-style mix producing independent per-arm seed streams.
fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str, ext: &str) -> tempfile::TempPath {
        let mut file = tempfile::Builder::new()
            .suffix(&format!(".{ext}"))
            .tempfile()
            .unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file.into_temp_path()
    }

    #[test]
    fn load_accepts_non_monotone_scores() {
        let path = write_temp(
            "dataset_id,arm_id,elapsed_seconds,accuracy\nd1,a1,5.0,0.6\nd1,a1,12.0,0.55\n",
            "csv",
        );
        let set = TraceSet::load(&path).unwrap();
        let traces = set.get("d1").unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].events.len(), 2);
        assert_eq!(traces[0].events[1].accuracy, 0.55);
    }

    #[test]
    fn load_rejects_accuracy_out_of_range() {
        let path = write_temp(
            "dataset_id,arm_id,elapsed_seconds,accuracy\nd1,a1,5.0,0.6\nd1,a1,12.0,1.3\n",
            "csv",
        );
        let err = TraceSet::load(&path).unwrap_err();
        match err {
            TraceError::Domain { line, ref msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("1.3"), "{msg}");
            }
            other => panic!("expected domain error, got {other}"),
        }
    }

    #[test]
    fn load_groups_by_dataset() {
        let mut body = String::from("dataset_id,arm_id,elapsed_seconds,accuracy\n");
        for d in ["d1", "d2"] {
            for a in ["a1", "a2", "a3"] {
                body.push_str(&format!("{d},{a},1.0,0.5\n"));
            }
        }
        let path = write_temp(&body, "csv");
        let set = TraceSet::load(&path).unwrap();
        assert_eq!(set.n_datasets(), 2);
        assert_eq!(set.get("d1").unwrap().len(), 3);
        assert_eq!(set.get("d2").unwrap().len(), 3);
    }

    #[test]
    fn load_rejects_duplicate_timestamps() {
        let path = write_temp(
            "dataset_id,arm_id,elapsed_seconds,accuracy\nd1,a1,5.0,0.6\nd1,a1,5.0,0.7\n",
            "csv",
        );
        let err = TraceSet::load(&path).unwrap_err();
        assert!(matches!(err, TraceError::Invalid { .. }), "{err}");
    }

    #[test]
    fn load_rejects_bad_header() {
        let path = write_temp("dataset,arm,t,acc\nd1,a1,5.0,0.6\n", "csv");
        assert!(matches!(
            TraceSet::load(&path).unwrap_err(),
            TraceError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn rows_sorted_by_time_on_load() {
        let path = write_temp(
            "dataset_id,arm_id,elapsed_seconds,accuracy\nd1,a1,12.0,0.5\nd1,a1,5.0,0.6\n",
            "csv",
        );
        let set = TraceSet::load(&path).unwrap();
        let events = &set.get("d1").unwrap()[0].events;
        assert_eq!(events[0].t, 5.0);
        assert_eq!(events[1].t, 12.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = demo_spec(3, 0.03);
        let set = TraceSet::from_traces(generate_traces(&spec).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        set.save(&path).unwrap();
        let reloaded = TraceSet::load(&path).unwrap();
        assert_eq!(set, reloaded);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let spec = demo_spec(2, 0.01);
        let set = TraceSet::from_traces(generate_traces(&spec).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        set.save(&path).unwrap();
        assert_eq!(set, TraceSet::load(&path).unwrap());
    }

    fn demo_spec(n_arms: usize, noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            dataset_id: "demo".into(),
            arms: (0..n_arms)
                .map(|i| GroundTruthCurve {
                    asymptote: 0.5 + 0.04 * i as f64,
                    rate: 0.02 + 0.01 * i as f64,
                    delay: 0.0,
                })
                .collect(),
            horizon: 400.0,
            mean_gap: 6.0,
            noise,
            seed: 99,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = demo_spec(3, 0.05);
        let a = generate_traces(&spec).unwrap();
        let b = generate_traces(&spec).unwrap();
        assert_eq!(a, b);
        let a_json = serde_json::to_string(&a).unwrap();
        let b_json = serde_json::to_string(&b).unwrap();
        assert_eq!(a_json, b_json);
    }

    #[test]
    fn noiseless_scores_bounded_by_asymptote() {
        let spec = SyntheticSpec {
            dataset_id: "d".into(),
            arms: vec![GroundTruthCurve {
                asymptote: 0.8,
                rate: 0.05,
                delay: 0.0,
            }],
            horizon: 1000.0,
            mean_gap: 2.0,
            noise: 0.0,
            seed: 5,
        };
        let traces = generate_traces(&spec).unwrap();
        assert!(!traces[0].events.is_empty());
        for event in &traces[0].events {
            assert!(event.accuracy <= 0.8 + 1e-12);
        }
    }

    #[test]
    fn noisy_scores_bounded_by_asymptote_plus_noise() {
        let spec = SyntheticSpec {
            dataset_id: "d".into(),
            arms: vec![GroundTruthCurve {
                asymptote: 0.9,
                rate: 0.1,
                delay: 0.0,
            }],
            horizon: 2000.0,
            mean_gap: 1.5,
            noise: 0.04,
            seed: 11,
        };
        for trace in generate_traces(&spec).unwrap() {
            let max = trace
                .events
                .iter()
                .map(|e| e.accuracy)
                .fold(0.0_f64, f64::max);
            assert!(max <= (0.9 + 0.04_f64).min(1.0) + 1e-12);
        }
    }

    #[test]
    fn arrival_counts_match_mean_gap() {
        // 3 arms, 600 s horizon, 5 s mean gap: expect about 120 events per arm.
        for seed in 0..100 {
            let spec = SyntheticSpec {
                dataset_id: "d".into(),
                arms: vec![
                    GroundTruthCurve {
                        asymptote: 0.7,
                        rate: 0.02,
                        delay: 0.0,
                    };
                    3
                ],
                horizon: 600.0,
                mean_gap: 5.0,
                noise: 0.01,
                seed,
            };
            for trace in generate_traces(&spec).unwrap() {
                let n = trace.events.len();
                assert!(
                    (60..=180).contains(&n),
                    "seed {seed} arm {}: {n} events outside +/-50% of 120",
                    trace.arm_id
                );
            }
        }
    }

    #[test]
    fn generated_traces_validate() {
        let spec = demo_spec(4, 0.1);
        let set = TraceSet::from_traces(generate_traces(&spec).unwrap()).unwrap();
        assert_eq!(set.get("demo").unwrap().len(), 4);
    }

    #[test]
    fn arm_ids_sort_in_index_order() {
        let spec = demo_spec(12, 0.0);
        let set = TraceSet::from_traces(generate_traces(&spec).unwrap()).unwrap();
        let ids: Vec<&str> = set.get("demo").unwrap().iter().map(|t| t.arm_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(ids[0], "arm00");
        assert_eq!(ids[11], "arm11");
    }

    #[test]
    fn spec_validation_rejects_bad_fields() {
        let mut spec = demo_spec(1, 0.0);
        spec.arms[0].asymptote = 1.2;
        assert!(matches!(generate_traces(&spec), Err(TraceError::Spec(_))));
        let mut spec = demo_spec(1, 0.0);
        spec.mean_gap = 0.0;
        assert!(matches!(generate_traces(&spec), Err(TraceError::Spec(_))));
        let mut spec = demo_spec(1, 0.0);
        spec.noise = -0.1;
        assert!(matches!(generate_traces(&spec), Err(TraceError::Spec(_))));
    }
}
