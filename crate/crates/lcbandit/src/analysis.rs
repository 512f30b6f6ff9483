//! Cross-policy comparison: per-cell rankings, mean-rank confidence
//! intervals, and plot-ready report files.
//!
//! Policies are compared the way the underlying benchmark methodology does:
//! within each comparison cell — one (dataset, budget, seed) instance run by
//! every policy — policies are ranked by the best accuracy they reached
//! (rank 1 is best, exact ties share the average of the ranks they span).
//! Each cell contributes one rank sample per policy; aggregating over all
//! cells gives a mean rank per policy with a normal-approximation 95%
//! confidence interval (`mean ± 1.96 * s / sqrt(n)`, `s` the sample standard
//! deviation). Rankings depend only on the *order* of accuracies, so they are
//! robust to any monotone rescaling of the score.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::RunResult;

/// One rank sample: how one policy placed within one comparison cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub policy: String,
    pub dataset_id: String,
    pub budget: f64,
    pub seed: u64,
    pub best_accuracy: f64,
    pub rank: f64,
}

/// All rank samples plus the comparison set they were computed against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankTable {
    /// Sorted by (policy, dataset, budget, seed).
    pub entries: Vec<RankEntry>,
    /// Sorted policy names; every cell contains each exactly once.
    pub policies: Vec<String>,
}

/// 95% confidence interval on a policy's mean rank.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRankCI {
    pub policy: String,
    pub n_runs: usize,
    pub mean_rank: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("incomplete comparison: {0}")]
    Incomplete(String),
    #[error("policy {policy} has {n} run(s); at least 2 are required for a CI")]
    TooFewRuns { policy: String, n: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RankTable {
    /// Rank samples of one policy across all cells, in entry order.
    pub fn ranks_for(&self, policy: &str) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.policy == policy)
            .map(|e| e.rank)
            .collect()
    }

    /// Rank samples grouped by (policy, budget) — the boxplot populations.
    pub fn ranks_by_policy_budget(&self) -> BTreeMap<(String, u64), Vec<f64>> {
        let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
        for e in &self.entries {
            groups
                .entry((e.policy.clone(), e.budget.to_bits()))
                .or_default()
                .push(e.rank);
        }
        groups
    }
}

/// Ranks every comparison cell in `results`.
///
/// A cell is one (dataset, budget, seed) triple; every cell must contain
/// exactly one result per policy appearing anywhere in the input, or the
/// comparison is ill-defined and an error names the offending cell.
pub fn rank_runs(results: &[RunResult]) -> Result<RankTable, AnalysisError> {
    let mut policies: Vec<String> = results.iter().map(|r| r.policy_name.clone()).collect();
    policies.sort();
    policies.dedup();

    // budget.to_bits() keeps grouping exact and, for the positive budgets
    // permitted by run configs, bit order equals numeric order.
    let mut cells: BTreeMap<(String, u64, u64), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        let key = (r.dataset_id.clone(), r.budget.to_bits(), r.seed);
        let cell = cells.entry(key).or_default();
        if cell.iter().any(|c| c.policy_name == r.policy_name) {
            return Err(AnalysisError::Incomplete(format!(
                "duplicate result for (dataset {}, budget {}, seed {}, policy {})",
                r.dataset_id, r.budget, r.seed, r.policy_name
            )));
        }
        cell.push(r);
    }

    let mut entries = Vec::with_capacity(results.len());
    for ((dataset_id, _, seed), cell) in &cells {
        for p in &policies {
            if !cell.iter().any(|r| &r.policy_name == p) {
                return Err(AnalysisError::Incomplete(format!(
                    "missing result for (dataset {dataset_id}, budget {}, seed {seed}, policy {p})",
                    cell[0].budget
                )));
            }
        }
        let mut order: Vec<&RunResult> = cell.clone();
        // Best accuracy first; the policy-name tiebreak only fixes the sort
        // order, not the ranks — exact accuracy ties share an averaged rank.
        order.sort_by(|x, y| {
            y.best_accuracy
                .total_cmp(&x.best_accuracy)
                .then_with(|| x.policy_name.cmp(&y.policy_name))
        });
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && order[j + 1].best_accuracy == order[i].best_accuracy {
                j += 1;
            }
            // Positions i..=j (0-based) tie; ranks are 1-based.
            let rank = (i + j + 2) as f64 / 2.0;
            for r in &order[i..=j] {
                entries.push(RankEntry {
                    policy: r.policy_name.clone(),
                    dataset_id: r.dataset_id.clone(),
                    budget: r.budget,
                    seed: r.seed,
                    best_accuracy: r.best_accuracy,
                    rank,
                });
            }
            i = j + 1;
        }
    }

    entries.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then_with(|| a.dataset_id.cmp(&b.dataset_id))
            .then_with(|| a.budget.total_cmp(&b.budget))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    Ok(RankTable { entries, policies })
}

/// Mean rank of `policy` with a 95% normal-approximation CI over its rank
/// samples. Requires at least two samples.
pub fn mean_rank_ci(table: &RankTable, policy: &str) -> Result<MeanRankCI, AnalysisError> {
    let ranks = table.ranks_for(policy);
    let n = ranks.len();
    if n < 2 {
        return Err(AnalysisError::TooFewRuns { policy: policy.to_string(), n });
    }
    let mean = ranks.iter().sum::<f64>() / n as f64;
    let var = ranks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = 1.96 * var.sqrt() / (n as f64).sqrt();
    Ok(MeanRankCI {
        policy: policy.to_string(),
        n_runs: n,
        mean_rank: mean,
        ci_low: mean - half,
        ci_high: mean + half,
    })
}

/// CIs for every policy in the table, in policy order.
pub fn all_mean_rank_cis(table: &RankTable) -> Result<Vec<MeanRankCI>, AnalysisError> {
    table.policies.iter().map(|p| mean_rank_ci(table, p)).collect()
}

/// Linear-interpolation quantile of ascending-sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Five-number boxplot summary with 1.5*IQR whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Boxplot statistics of a non-empty sample: quartiles by linear
/// interpolation, whiskers at the most extreme data within 1.5*IQR of the
/// box, everything beyond listed raw.
pub fn box_stats(values: &[f64]) -> BoxStats {
    assert!(!values.is_empty(), "box_stats needs data");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (fence_low, fence_high) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|&v| v >= fence_low)
        .unwrap_or(sorted[0]);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= fence_high)
        .unwrap_or(sorted[sorted.len() - 1]);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < whisker_low || v > whisker_high)
        .collect();
    BoxStats { n: sorted.len(), q1, median, q3, whisker_low, whisker_high, outliers }
}

/// Writes the report files into `out`:
///
/// * `ranks.csv` — every rank sample (policy, dataset_id, budget_s,
///   best_accuracy, rank);
/// * `cis.csv` — one CI row per policy;
/// * `boxplots.csv` — per (policy, budget) rank-distribution statistics,
///   plot-ready;
/// * `summary.txt` — a human-readable digest.
///
/// Output is deterministic: equal inputs produce byte-identical files.
pub fn emit_report(
    table: &RankTable,
    cis: &[MeanRankCI],
    out: &Path,
) -> Result<Vec<PathBuf>, AnalysisError> {
    let write = |name: &str, content: String| -> Result<PathBuf, AnalysisError> {
        let path = out.join(name);
        fs::write(&path, content).map_err(|e| AnalysisError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(path)
    };

    let mut ranks = String::from("policy,dataset_id,budget_s,best_accuracy,rank\n");
    for e in &table.entries {
        writeln!(
            ranks,
            "{},{},{},{},{}",
            e.policy, e.dataset_id, e.budget, e.best_accuracy, e.rank
        )
        .expect("string write");
    }

    let mut cis_csv = String::from("policy,n_runs,mean_rank,ci_low,ci_high\n");
    for ci in cis {
        writeln!(
            cis_csv,
            "{},{},{},{},{}",
            ci.policy, ci.n_runs, ci.mean_rank, ci.ci_low, ci.ci_high
        )
        .expect("string write");
    }

    let mut boxes =
        String::from("policy,budget_s,n,q1,median,q3,whisker_low,whisker_high,outliers\n");
    for ((policy, budget_bits), ranks) in table.ranks_by_policy_budget() {
        let stats = box_stats(&ranks);
        let outliers = stats
            .outliers
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            boxes,
            "{},{},{},{},{},{},{},{},{}",
            policy,
            f64::from_bits(budget_bits),
            stats.n,
            stats.q1,
            stats.median,
            stats.q3,
            stats.whisker_low,
            stats.whisker_high,
            outliers
        )
        .expect("string write");
    }

    let mut summary = String::new();
    writeln!(summary, "Policy comparison over {} rank samples", table.entries.len())
        .expect("string write");
    writeln!(
        summary,
        "{} policies, {} comparison cells\n",
        table.policies.len(),
        if table.policies.is_empty() {
            0
        } else {
            table.entries.len() / table.policies.len()
        }
    )
    .expect("string write");
    writeln!(
        summary,
        "{:<28} {:>6} {:>10} {:>20}",
        "policy", "n", "mean rank", "95% CI"
    )
    .expect("string write");
    let mut by_mean = cis.to_vec();
    by_mean.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then(a.policy.cmp(&b.policy)));
    for ci in &by_mean {
        writeln!(
            summary,
            "{:<28} {:>6} {:>10.3} [{:>7.3}, {:>7.3}]",
            ci.policy, ci.n_runs, ci.mean_rank, ci.ci_low, ci.ci_high
        )
        .expect("string write");
    }

    Ok(vec![
        write("ranks.csv", ranks)?,
        write("cis.csv", cis_csv)?,
        write("boxplots.csv", boxes)?,
        write("summary.txt", summary)?,
    ])
}
