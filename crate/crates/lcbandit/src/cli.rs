//! Command-line front end: `run`, `sweep`, `analyze`, and `gen-traces`.
//!
//! Every command is exposed as an ordinary function returning a typed
//! summary, so integration tests can drive the tool without spawning a
//! process. [`execute`] maps errors onto the documented exit codes:
//!
//! * `0` — success
//! * `2` — configuration error (bad TOML, invalid parameters, budget that
//!   cannot cover the initialization round)
//! * `3` — data error (missing or corrupt traces/results)
//! * `4` — partial failure (some runs failed; the manifest records which)
//!
//! `run` executes the cartesian product dataset x budget x policy x seed,
//! writing one JSON result per cell, a `manifest.json` with a SHA-256
//! digest per result, and an `effective_config.toml` echo of the fully
//! expanded configuration. Re-running the echo reproduces every byte.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis;
use crate::config::{expand_policies, ExperimentConfig};
use crate::policy::PolicySpec;
use crate::sim::{self, RunConfig, RunResult};
use crate::trace::{generate_traces, SyntheticSpec, TraceError, TraceSet, TuningTrace};

#[derive(Debug)]
pub enum CliError {
    /// The configuration is unusable (exit code 2).
    Config(String),
    /// Input or output data is missing or corrupt (exit code 3).
    Data(String),
    /// Some runs failed while others succeeded (exit code 4).
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Partial(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Partial(msg) => write!(f, "partial failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(
    name = "lcbandit",
    version,
    about = "Budgeted algorithm selection by trace replay: learning-curve bandits vs. classic baselines"
)]
pub struct Cli {
    /// Cap the number of worker threads (default: one per CPU core).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute the experiment described by a config file.
    Run {
        /// Path to the experiment TOML.
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's budget list (repeatable).
        #[arg(long = "budget", value_name = "SECONDS")]
        budgets: Vec<f64>,
        /// Replace the config's seed list (repeatable).
        #[arg(long = "seed", value_name = "SEED")]
        seeds: Vec<u64>,
        /// Also write a per-run decision log CSV next to each result.
        #[arg(long)]
        decision_log: bool,
    },
    /// Execute the full grid in the config (`run` without overrides).
    Sweep {
        /// Path to the experiment TOML.
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank finished results and write the report files.
    Analyze {
        /// Directory holding per-run `.json` results.
        #[arg(long)]
        results: PathBuf,
        /// Output directory for ranks.csv, cis.csv, boxplots.csv, summary.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic tuning traces and save them to one file.
    GenTraces {
        /// TOML file with one or more [[synthetic]] dataset blocks.
        #[arg(long)]
        spec: PathBuf,
        /// Output trace file (.csv or .json).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses process arguments, runs the command, and returns the exit code.
pub fn main() -> i32 {
    execute(Cli::parse())
}

/// Runs a parsed command line, printing human summaries to stdout and
/// errors to stderr. Returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let workers = cli.workers;
    let outcome: Result<String, CliError> = match cli.command {
        Command::Run { config, budgets, seeds, decision_log } => cmd_run(&RunOptions {
            config_path: &config,
            budgets: &budgets,
            seeds: &seeds,
            workers,
            decision_log,
        })
        .map(|s| s.describe()),
        Command::Sweep { config } => cmd_sweep(&config, workers).map(|s| s.describe()),
        Command::Analyze { results, out } => cmd_analyze(&results, &out).map(|s| {
            format!(
                "analyzed {} results; wrote {} report files to {}",
                s.n_results,
                s.files.len(),
                s.out_dir.display()
            )
        }),
        Command::GenTraces { spec, out } => cmd_gen_traces(&spec, &out).map(|s| {
            format!(
                "wrote {} traces across {} datasets to {}",
                s.n_traces,
                s.n_datasets,
                s.out.display()
            )
        }),
    };
    match outcome {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug)]
pub struct RunOptions<'a> {
    pub config_path: &'a Path,
    /// Non-empty: replaces the config's budget list.
    pub budgets: &'a [f64],
    /// Non-empty: replaces the config's seed list.
    pub seeds: &'a [u64],
    pub workers: Option<usize>,
    pub decision_log: bool,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub n_runs: usize,
    pub warnings: Vec<String>,
}

impl RunSummary {
    fn describe(&self) -> String {
        format!(
            "wrote {} run results to {} (manifest.json, effective_config.toml)",
            self.n_runs,
            self.out_dir.display()
        )
    }
}

/// One line of `manifest.json`: where a result went and its content digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset_id: String,
    pub policy: String,
    pub budget: f64,
    pub seed: u64,
    /// File name within the output directory; empty if the run failed.
    pub file: String,
    /// SHA-256 of the result file's bytes; empty if the run failed.
    pub sha256: String,
    /// `"ok"` or `"failed: <reason>"`.
    pub status: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub effective_config_sha256: String,
    pub entries: Vec<ManifestEntry>,
}

pub fn cmd_run(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let mut config = ExperimentConfig::load(opts.config_path)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if !opts.budgets.is_empty() {
        config.budgets = opts.budgets.to_vec();
    }
    if !opts.seeds.is_empty() {
        config.seeds = opts.seeds.to_vec();
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let (specs, warnings) =
        expand_policies(&config.policies).map_err(|e| CliError::Config(e.to_string()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let traces = load_trace_set(&config)?;
    for (dataset_id, ts) in traces.iter() {
        if !filename_safe(dataset_id) {
            return Err(CliError::Data(format!(
                "dataset id {dataset_id:?} is not filename-safe (use letters, digits, '.', '-', '_')"
            )));
        }
        let need = config.dt * ts.len() as f64;
        for &b in &config.budgets {
            if b < need {
                return Err(CliError::Config(format!(
                    "budget {b} s cannot cover the initialization round for dataset \
                     {dataset_id} ({} arms x dt {} s = {need} s)",
                    ts.len(),
                    config.dt
                )));
            }
        }
    }

    fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", config.output_dir.display())))?;
    let effective = config.effective(&specs).to_toml();
    let effective_path = config.output_dir.join("effective_config.toml");
    fs::write(&effective_path, &effective)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", effective_path.display())))?;

    struct Cell<'a> {
        dataset_id: &'a str,
        traces: &'a [TuningTrace],
        spec: &'a PolicySpec,
        budget: f64,
        seed: u64,
    }
    let mut cells = Vec::new();
    for (dataset_id, ts) in traces.iter() {
        for &budget in &config.budgets {
            for spec in &specs {
                for &seed in &config.seeds {
                    cells.push(Cell { dataset_id, traces: ts, spec, budget, seed });
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    let run_cell = |cell: &Cell| -> ManifestEntry {
        let run_config = RunConfig {
            budget: cell.budget,
            dt: config.dt,
            policy: cell.spec.clone(),
            overhead: config.overhead,
            seed: cell.seed,
        };
        let policy_name = cell.spec.name();
        let mut entry = ManifestEntry {
            dataset_id: cell.dataset_id.to_string(),
            policy: policy_name.clone(),
            budget: cell.budget,
            seed: cell.seed,
            file: String::new(),
            sha256: String::new(),
            status: String::new(),
        };
        let result = match sim::run(cell.traces, &run_config) {
            Ok(r) => r,
            Err(e) => {
                entry.status = format!("failed: {e}");
                return entry;
            }
        };
        let file = format!(
            "{}__{}__b{}__s{}.json",
            cell.dataset_id, policy_name, cell.budget, cell.seed
        );
        let json = result.to_json();
        let path = config.output_dir.join(&file);
        if let Err(e) = fs::write(&path, &json) {
            entry.status = format!("failed: cannot write {}: {e}", path.display());
            return entry;
        }
        if opts.decision_log {
            let log_path = config.output_dir.join(format!(
                "{}__{}__b{}__s{}.decisions.csv",
                cell.dataset_id, policy_name, cell.budget, cell.seed
            ));
            if let Err(e) = fs::write(&log_path, decision_log_csv(&result)) {
                entry.status = format!("failed: cannot write {}: {e}", log_path.display());
                return entry;
            }
        }
        entry.file = file;
        entry.sha256 = sha256_hex(json.as_bytes());
        entry.status = "ok".to_string();
        entry
    };
    let entries: Vec<ManifestEntry> =
        pool.install(|| cells.par_iter().map(run_cell).collect());

    let n_failed = entries.iter().filter(|e| e.status != "ok").count();
    let n_total = entries.len();
    let manifest = Manifest {
        effective_config_sha256: sha256_hex(effective.as_bytes()),
        entries,
    };
    let manifest_path = config.output_dir.join("manifest.json");
    let mut manifest_json =
        serde_json::to_string(&manifest).expect("manifest serializes to JSON");
    manifest_json.push('\n');
    fs::write(&manifest_path, manifest_json)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", manifest_path.display())))?;

    if n_failed > 0 {
        return Err(CliError::Partial(format!(
            "{n_failed} of {n_total} runs failed; see {}",
            manifest_path.display()
        )));
    }
    Ok(RunSummary {
        out_dir: config.output_dir.clone(),
        manifest_path,
        n_runs: n_total,
        warnings,
    })
}

pub fn cmd_sweep(config_path: &Path, workers: Option<usize>) -> Result<RunSummary, CliError> {
    cmd_run(&RunOptions { config_path, budgets: &[], seeds: &[], workers, decision_log: false })
}

#[derive(Debug)]
pub struct AnalyzeSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub n_results: usize,
}

pub fn cmd_analyze(results_dir: &Path, out_dir: &Path) -> Result<AnalyzeSummary, CliError> {
    let read = fs::read_dir(results_dir).map_err(|e| {
        CliError::Data(format!("cannot read results dir {}: {e}", results_dir.display()))
    })?;
    let mut paths: Vec<PathBuf> = read
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!(
            "no result files (*.json) in {}",
            results_dir.display()
        )));
    }
    let mut results = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
        results.push(
            RunResult::from_json(&text)
                .map_err(|e| CliError::Data(format!("corrupt result {}: {e}", p.display())))?,
        );
    }
    let table = analysis::rank_runs(&results).map_err(|e| CliError::Data(e.to_string()))?;
    let cis = analysis::all_mean_rank_cis(&table).map_err(|e| CliError::Data(e.to_string()))?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let files = analysis::emit_report(&table, &cis, out_dir)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(AnalyzeSummary { out_dir: out_dir.to_path_buf(), files, n_results: results.len() })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenSpecFile {
    synthetic: Vec<SyntheticSpec>,
}

#[derive(Debug)]
pub struct GenSummary {
    pub out: PathBuf,
    pub n_datasets: usize,
    pub n_traces: usize,
}

pub fn cmd_gen_traces(spec_path: &Path, out_path: &Path) -> Result<GenSummary, CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let file: GenSpecFile = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", spec_path.display())))?;
    if file.synthetic.is_empty() {
        return Err(CliError::Config(format!(
            "{} declares no [[synthetic]] blocks",
            spec_path.display()
        )));
    }
    let mut all = Vec::new();
    for spec in &file.synthetic {
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        all.extend(generate_traces(spec).map_err(|e| CliError::Config(e.to_string()))?);
    }
    let set = TraceSet::from_traces(all).map_err(|e| CliError::Config(e.to_string()))?;
    let n_traces = set.iter().map(|(_, ts)| ts.len()).sum();
    set.save(out_path).map_err(|e| match e {
        TraceError::Format(_) => CliError::Config(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    Ok(GenSummary { out: out_path.to_path_buf(), n_datasets: set.n_datasets(), n_traces })
}

fn load_trace_set(config: &ExperimentConfig) -> Result<TraceSet, CliError> {
    if let Some(path) = &config.traces.path {
        TraceSet::load(path).map_err(|e| CliError::Data(e.to_string()))
    } else {
        let mut all = Vec::new();
        for spec in &config.traces.synthetic {
            all.extend(generate_traces(spec).map_err(|e| CliError::Data(e.to_string()))?);
        }
        TraceSet::from_traces(all)
            .map_err(|e| CliError::Config(format!("synthetic traces: {e}")))
    }
}

fn filename_safe(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Human-auditable per-iteration log: what was chosen, why, with what
/// scores, and how much budget remained afterwards.
fn decision_log_csv(result: &RunResult) -> String {
    let mut out = String::from("iteration,arm,rationale,b_rem,executed,scores\n");
    for d in &result.decisions {
        let scores =
            d.scores.iter().map(|&s| score_str(s)).collect::<Vec<_>>().join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.iteration, d.arm, d.rationale, d.b_rem, d.executed, scores
        );
    }
    out
}

fn score_str(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}
