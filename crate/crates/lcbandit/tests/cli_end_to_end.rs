//! End-to-end checks of the installed binary: every subcommand is spawned
//! as a real process, exercising argument parsing, exit codes, and the
//! files written to disk. In-process coverage of the same code paths lives
//! in the library's `cli` module tests.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lcbandit"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn lcbandit");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("spawn lcbandit");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_experiment_config(dir: &Path, traces_path: &Path, out_dir: &Path) -> std::path::PathBuf {
    let text = format!(
        r#"
dt = 10.0
budgets = [60, 120]
seeds = [1, 2]
output_dir = "{out}"

[traces]
path = "{traces}"

[overhead]
mode = "fixed"
seconds = 0.25

[[policies]]
kind = "round_robin"

[[policies]]
kind = "master_lc_ucb"
rho = 0.05
"#,
        out = out_dir.display(),
        traces = traces_path.display(),
    );
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn pipeline_gen_traces_run_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let gen_spec = dir.path().join("datasets.toml");
    std::fs::write(
        &gen_spec,
        r#"
[[synthetic]]
dataset_id = "synA"
horizon = 150.0
mean_gap = 2.0
noise = 0.02
seed = 11
arms = [
    { asymptote = 0.7, rate = 0.1 },
    { asymptote = 0.9, rate = 0.02 },
]

[[synthetic]]
dataset_id = "synB"
horizon = 150.0
mean_gap = 2.0
noise = 0.02
seed = 12
arms = [
    { asymptote = 0.6, rate = 0.2 },
    { asymptote = 0.8, rate = 0.03 },
]
"#,
    )
    .unwrap();

    let traces = dir.path().join("traces.csv");
    let out = run_ok(bin().args(["gen-traces"]).arg("--spec").arg(&gen_spec).arg("--out").arg(&traces));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2 datasets"), "stdout: {stdout}");
    assert!(traces.is_file());

    let results = dir.path().join("results");
    let config = write_experiment_config(dir.path(), &traces, &results);
    let out = run_ok(bin().arg("run").arg("--config").arg(&config).args(["--workers", "1"]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // 2 datasets x 2 budgets x 2 policies x 2 seeds.
    assert!(stdout.contains("16 run results"), "stdout: {stdout}");
    assert!(results.join("manifest.json").is_file());
    assert!(results.join("effective_config.toml").is_file());
    assert!(results.join("synA__RoundRobin__b60__s1.json").is_file());
    assert!(results.join("synB__MasterLC-UCB-0.05__b120__s2.json").is_file());

    let report = dir.path().join("report");
    run_ok(bin().arg("analyze").arg("--results").arg(&results).arg("--out").arg(&report));
    for file in ["ranks.csv", "cis.csv", "boxplots.csv", "summary.txt"] {
        assert!(report.join(file).is_file(), "missing {file}");
    }
    let cis = std::fs::read_to_string(report.join("cis.csv")).unwrap();
    assert!(cis.contains("RoundRobin") && cis.contains("MasterLC-UCB-0.05"), "cis: {cis}");
}

#[test]
fn run_honors_budget_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let gen_spec = dir.path().join("datasets.toml");
    std::fs::write(
        &gen_spec,
        r#"
[[synthetic]]
dataset_id = "ov"
horizon = 100.0
mean_gap = 2.0
noise = 0.01
seed = 3
arms = [
    { asymptote = 0.7, rate = 0.1 },
    { asymptote = 0.8, rate = 0.05 },
]
"#,
    )
    .unwrap();
    let traces = dir.path().join("traces.json");
    run_ok(bin().arg("gen-traces").arg("--spec").arg(&gen_spec).arg("--out").arg(&traces));

    let results = dir.path().join("results");
    let config = write_experiment_config(dir.path(), &traces, &results);
    run_ok(
        bin()
            .arg("run")
            .arg("--config")
            .arg(&config)
            .args(["--budget", "90", "--seed", "7", "--decision-log", "--workers", "1"]),
    );
    let names: Vec<String> = std::fs::read_dir(&results)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    // 1 dataset x 1 budget x 2 policies x 1 seed, each with a decision log.
    assert_eq!(names.iter().filter(|n| n.ends_with(".json")).count() - 1, 2);
    assert_eq!(names.iter().filter(|n| n.ends_with(".decisions.csv")).count(), 2);
    assert!(names.iter().all(|n| !n.contains("b60") && !n.contains("s1.json")));

    let log = std::fs::read_to_string(results.join("ov__RoundRobin__b90__s7.decisions.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,arm,rationale,b_rem,executed,scores"
    );
    assert!(lines.next().unwrap().starts_with("1,0,round_robin,"));
}

#[test]
fn effective_config_echo_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let gen_spec = dir.path().join("datasets.toml");
    std::fs::write(
        &gen_spec,
        r#"
[[synthetic]]
dataset_id = "echo"
horizon = 100.0
mean_gap = 2.0
noise = 0.02
seed = 5
arms = [
    { asymptote = 0.7, rate = 0.1 },
    { asymptote = 0.8, rate = 0.05 },
]
"#,
    )
    .unwrap();
    let traces = dir.path().join("traces.csv");
    run_ok(bin().arg("gen-traces").arg("--spec").arg(&gen_spec).arg("--out").arg(&traces));

    let results = dir.path().join("results");
    let config = write_experiment_config(dir.path(), &traces, &results);
    run_ok(bin().arg("run").arg("--config").arg(&config).args(["--workers", "1"]));
    let probe = results.join("echo__MasterLC-UCB-0.05__b120__s2.json");
    let before = std::fs::read(&probe).unwrap();

    // Re-running from the echoed config must reproduce every byte.
    let echoed = results.join("effective_config.toml");
    run_ok(bin().arg("run").arg("--config").arg(&echoed).args(["--workers", "1"]));
    assert_eq!(before, std::fs::read(&probe).unwrap());
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();

    // Config error: no policies.
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        format!(
            r#"
dt = 10.0
budgets = [60]
seeds = [1]
output_dir = "{}"
policies = []

[[traces.synthetic]]
dataset_id = "x"
horizon = 50.0
mean_gap = 2.0
noise = 0.01
seed = 1
arms = [ {{ asymptote = 0.7, rate = 0.1 }} ]
"#,
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let (code, stderr) = exit_code(bin().arg("run").arg("--config").arg(&bad));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("error:"), "stderr: {stderr}");

    // Data error: traces file does not exist.
    let missing = dir.path().join("missing_traces.toml");
    std::fs::write(
        &missing,
        format!(
            r#"
dt = 10.0
budgets = [60]
seeds = [1]
output_dir = "{}"

[traces]
path = "{}"

[[policies]]
kind = "round_robin"
"#,
            dir.path().join("out").display(),
            dir.path().join("nope.csv").display()
        ),
    )
    .unwrap();
    let (code, stderr) = exit_code(bin().arg("run").arg("--config").arg(&missing));
    assert_eq!(code, 3, "stderr: {stderr}");

    // Data error: analyzing an empty directory.
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let (code, _) = exit_code(
        bin().arg("analyze").arg("--results").arg(&empty).arg("--out").arg(dir.path().join("rep")),
    );
    assert_eq!(code, 3);

    // Clap usage errors also exit with 2.
    let (code, _) = exit_code(bin().arg("run"));
    assert_eq!(code, 2);
}

#[test]
fn help_lists_all_subcommands() {
    let out = run_ok(bin().arg("--help"));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["run", "sweep", "analyze", "gen-traces"] {
        assert!(text.contains(cmd), "help misses {cmd}: {text}");
    }
}
