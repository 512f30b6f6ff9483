//! Experiment configuration: one TOML file describing traces, budgets,
//! policies (with optional parameter grids), seeds, and output.
//!
//! A policy entry may give scalar parameters (`rho = 0.05`) or lists
//! (`rho = [0.0, 0.05, 0.1]`); lists expand into the cartesian product of
//! concrete policies, so a whole grid-search sweep is one entry. Invalid
//! grid combinations (`eps1 + eps2 > 1`) are skipped with a warning; an
//! entry that is invalid outright (or whose grid is empty after skipping)
//! is a configuration error.
//!
//! The fully expanded configuration is echoed into the output directory as
//! `effective_config.toml`; re-running from that echo reproduces the exact
//! same experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicySpec;
use crate::sim::OverheadModel;
use crate::trace::SyntheticSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A scalar or a list of scalars; lists declare parameter grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }

    fn is_grid(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    RoundRobin,
    Ucb1,
    BestKRewards,
    BestKVelocity,
    MasterLc,
    MasterLcDecay,
    MasterLcUcb,
}

/// One `[[policies]]` table: a kind plus whichever parameters it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<OneOrMany<usize>>,
}

impl PolicyEntry {
    /// The scalar entry equivalent to one concrete policy (used for the
    /// effective-config echo).
    pub fn from_spec(spec: &PolicySpec) -> Self {
        let empty = PolicyEntry {
            kind: PolicyKind::RoundRobin,
            eps1: None,
            eps2: None,
            rho: None,
            k: None,
        };
        match *spec {
            PolicySpec::RoundRobin => PolicyEntry { kind: PolicyKind::RoundRobin, ..empty },
            PolicySpec::Ucb1 => PolicyEntry { kind: PolicyKind::Ucb1, ..empty },
            PolicySpec::BestKRewards { k } => PolicyEntry {
                kind: PolicyKind::BestKRewards,
                k: Some(OneOrMany::One(k)),
                ..empty
            },
            PolicySpec::BestKVelocity { k } => PolicyEntry {
                kind: PolicyKind::BestKVelocity,
                k: Some(OneOrMany::One(k)),
                ..empty
            },
            PolicySpec::MasterLc { eps1, eps2 } => PolicyEntry {
                kind: PolicyKind::MasterLc,
                eps1: Some(OneOrMany::One(eps1)),
                eps2: Some(OneOrMany::One(eps2)),
                ..empty
            },
            PolicySpec::MasterLcDecay => PolicyEntry { kind: PolicyKind::MasterLcDecay, ..empty },
            PolicySpec::MasterLcUcb { rho } => PolicyEntry {
                kind: PolicyKind::MasterLcUcb,
                rho: Some(OneOrMany::One(rho)),
                ..empty
            },
        }
    }

    fn reject_params(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        let given = [
            ("eps1", self.eps1.is_some()),
            ("eps2", self.eps2.is_some()),
            ("rho", self.rho.is_some()),
            ("k", self.k.is_some()),
        ];
        for (name, present) in given {
            if present && !allowed.contains(&name) {
                return Err(ConfigError::Invalid(format!(
                    "policy kind {:?} does not take parameter {name}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    fn require<'a, T: Clone>(
        &self,
        field: &Option<OneOrMany<T>>,
        name: &'a str,
    ) -> Result<Vec<T>, ConfigError> {
        field.as_ref().map(OneOrMany::values).ok_or_else(|| {
            ConfigError::Invalid(format!("policy kind {:?} requires parameter {name}", self.kind))
        })
    }

    /// Expands this entry into concrete policies.
    ///
    /// Grid combinations that fail validation are skipped and reported in
    /// the warning list; a scalar entry that fails validation, or a grid
    /// with no valid combination left, is an error.
    pub fn expand(&self) -> Result<(Vec<PolicySpec>, Vec<String>), ConfigError> {
        let mut warnings = Vec::new();
        let candidates: Vec<PolicySpec> = match self.kind {
            PolicyKind::RoundRobin => {
                self.reject_params(&[])?;
                vec![PolicySpec::RoundRobin]
            }
            PolicyKind::Ucb1 => {
                self.reject_params(&[])?;
                vec![PolicySpec::Ucb1]
            }
            PolicyKind::MasterLcDecay => {
                self.reject_params(&[])?;
                vec![PolicySpec::MasterLcDecay]
            }
            PolicyKind::BestKRewards => {
                self.reject_params(&["k"])?;
                self.require(&self.k, "k")?
                    .into_iter()
                    .map(|k| PolicySpec::BestKRewards { k })
                    .collect()
            }
            PolicyKind::BestKVelocity => {
                self.reject_params(&["k"])?;
                self.require(&self.k, "k")?
                    .into_iter()
                    .map(|k| PolicySpec::BestKVelocity { k })
                    .collect()
            }
            PolicyKind::MasterLcUcb => {
                self.reject_params(&["rho"])?;
                self.require(&self.rho, "rho")?
                    .into_iter()
                    .map(|rho| PolicySpec::MasterLcUcb { rho })
                    .collect()
            }
            PolicyKind::MasterLc => {
                self.reject_params(&["eps1", "eps2"])?;
                let e1s = self.require(&self.eps1, "eps1")?;
                let e2s = self.require(&self.eps2, "eps2")?;
                e1s.iter()
                    .flat_map(|&eps1| {
                        e2s.iter().map(move |&eps2| PolicySpec::MasterLc { eps1, eps2 })
                    })
                    .collect()
            }
        };
        let is_grid = [&self.eps1, &self.eps2, &self.rho]
            .iter()
            .any(|f| f.as_ref().is_some_and(OneOrMany::is_grid))
            || self.k.as_ref().is_some_and(OneOrMany::is_grid);

        let mut specs = Vec::new();
        for spec in candidates {
            match spec.validate() {
                Ok(()) => specs.push(spec),
                Err(e) if is_grid => {
                    warnings.push(format!("skipping grid combination {}: {e}", spec.name()));
                }
                Err(e) => return Err(ConfigError::Invalid(e.to_string())),
            }
        }
        if specs.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "policy entry {:?} expands to no valid policy",
                self.kind
            )));
        }
        Ok((specs, warnings))
    }
}

/// Expands all entries and rejects duplicate policy names across the whole
/// comparison set.
pub fn expand_policies(entries: &[PolicyEntry]) -> Result<(Vec<PolicySpec>, Vec<String>), ConfigError> {
    let mut specs = Vec::new();
    let mut warnings = Vec::new();
    for entry in entries {
        let (mut s, mut w) = entry.expand()?;
        specs.append(&mut s);
        warnings.append(&mut w);
    }
    for (i, spec) in specs.iter().enumerate() {
        let name = spec.name();
        if specs[..i].iter().any(|other| other.name() == name) {
            return Err(ConfigError::Invalid(format!(
                "duplicate policy {name} in the expanded set"
            )));
        }
    }
    Ok((specs, warnings))
}

/// Where the traces come from: a file or synthetic generation (exactly one).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracesSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synthetic: Vec<SyntheticSpec>,
}

fn default_dt() -> f64 {
    10.0
}

/// The experiment description parsed from the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub budgets: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub traces: TracesSource,
    #[serde(default)]
    pub overhead: OverheadModel,
    pub policies: Vec<PolicyEntry>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Structural validation; data-dependent checks (budgets vs. arm count)
    /// happen once traces are loaded.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ConfigError::Invalid(format!("dt must be > 0 (got {})", self.dt)));
        }
        if self.budgets.is_empty() {
            return Err(ConfigError::Invalid("budgets must be non-empty".into()));
        }
        for &b in &self.budgets {
            if !b.is_finite() || b <= 0.0 {
                return Err(ConfigError::Invalid(format!("budget {b} must be > 0")));
            }
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must be non-empty".into()));
        }
        if self.policies.is_empty() {
            return Err(ConfigError::Invalid("policies must be non-empty".into()));
        }
        let has_path = self.traces.path.is_some();
        let has_synth = !self.traces.synthetic.is_empty();
        if has_path == has_synth {
            return Err(ConfigError::Invalid(
                "traces must give exactly one of `path` or `synthetic`".into(),
            ));
        }
        for spec in &self.traces.synthetic {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let OverheadModel::Fixed { seconds } = self.overhead {
            if !(0.0..=self.dt).contains(&seconds) {
                return Err(ConfigError::Invalid(format!(
                    "fixed overhead {seconds} must lie in [0, dt = {}]",
                    self.dt
                )));
            }
        }
        Ok(())
    }

    /// The fully expanded equivalent of this config: grids replaced by one
    /// scalar entry per concrete policy. Running the echo reproduces the
    /// experiment exactly.
    pub fn effective(&self, expanded: &[PolicySpec]) -> ExperimentConfig {
        ExperimentConfig {
            policies: expanded.iter().map(PolicyEntry::from_spec).collect(),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: "<inline>".into(), msg: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    const BASE: &str = r#"
        dt = 10.0
        budgets = [150, 300.5]
        seeds = [1, 2]
        output_dir = "out"

        [traces]
        path = "traces.csv"

        [[policies]]
        kind = "round_robin"
    "#;

    #[test]
    fn parses_minimal_config() {
        let config = parse(BASE).unwrap();
        assert_eq!(config.dt, 10.0);
        assert_eq!(config.budgets, vec![150.0, 300.5]);
        assert_eq!(config.traces.path.as_deref(), Some(Path::new("traces.csv")));
        let (specs, warnings) = expand_policies(&config.policies).unwrap();
        assert_eq!(specs, vec![PolicySpec::RoundRobin]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn parses_synthetic_source() {
        let text = r#"
            budgets = [100]
            seeds = [1]
            output_dir = "out"

            [[traces.synthetic]]
            dataset_id = "syn0"
            horizon = 500.0
            mean_gap = 5.0
            noise = 0.02
            seed = 9
            arms = [
                { asymptote = 0.7, rate = 0.02 },
                { asymptote = 0.9, rate = 0.005, delay = 30.0 },
            ]

            [[policies]]
            kind = "ucb1"
        "#;
        let config = parse(text).unwrap();
        assert_eq!(config.dt, 10.0, "dt defaults to 10 s");
        assert_eq!(config.traces.synthetic.len(), 1);
        assert_eq!(config.traces.synthetic[0].arms[1].delay, 30.0);
    }

    #[test]
    fn requires_exactly_one_trace_source() {
        let none = r#"
            budgets = [100]
            seeds = [1]
            output_dir = "out"
            [traces]
            [[policies]]
            kind = "round_robin"
        "#;
        assert!(matches!(parse(none), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn grid_entry_expands_cartesian_product() {
        let entry = PolicyEntry {
            kind: PolicyKind::MasterLc,
            eps1: Some(OneOrMany::Many(vec![0.05, 0.1])),
            eps2: Some(OneOrMany::Many(vec![0.0, 0.1, 0.2])),
            rho: None,
            k: None,
        };
        let (specs, warnings) = entry.expand().unwrap();
        assert_eq!(specs.len(), 6);
        assert!(warnings.is_empty());
        assert!(specs.contains(&PolicySpec::MasterLc { eps1: 0.05, eps2: 0.2 }));
    }

    #[test]
    fn invalid_grid_pairs_skipped_with_warning() {
        let entry = PolicyEntry {
            kind: PolicyKind::MasterLc,
            eps1: Some(OneOrMany::Many(vec![0.6, 0.9])),
            eps2: Some(OneOrMany::Many(vec![0.0, 0.4])),
            rho: None,
            k: None,
        };
        let (specs, warnings) = entry.expand().unwrap();
        // 0.9 + 0.4 > 1 is skipped; the other three pairs survive.
        assert_eq!(specs.len(), 3);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("MasterLC-0.9-0.4"), "{}", warnings[0]);
    }

    #[test]
    fn invalid_scalar_entry_is_an_error() {
        let entry = PolicyEntry {
            kind: PolicyKind::MasterLc,
            eps1: Some(OneOrMany::One(0.9)),
            eps2: Some(OneOrMany::One(0.4)),
            rho: None,
            k: None,
        };
        assert!(matches!(entry.expand(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn fully_invalid_grid_is_an_error() {
        let entry = PolicyEntry {
            kind: PolicyKind::MasterLcUcb,
            rho: Some(OneOrMany::Many(vec![-1.0, -2.0])),
            eps1: None,
            eps2: None,
            k: None,
        };
        assert!(entry.expand().is_err());
    }

    #[test]
    fn missing_and_misplaced_params_rejected() {
        let no_rho = PolicyEntry {
            kind: PolicyKind::MasterLcUcb,
            eps1: None,
            eps2: None,
            rho: None,
            k: None,
        };
        assert!(no_rho.expand().is_err());
        let stray_k = PolicyEntry {
            kind: PolicyKind::RoundRobin,
            eps1: None,
            eps2: None,
            rho: None,
            k: Some(OneOrMany::One(3)),
        };
        assert!(stray_k.expand().is_err());
    }

    #[test]
    fn duplicate_expanded_names_rejected() {
        let entries = vec![
            PolicyEntry {
                kind: PolicyKind::MasterLcUcb,
                rho: Some(OneOrMany::Many(vec![0.05, 0.05])),
                eps1: None,
                eps2: None,
                k: None,
            },
        ];
        let err = expand_policies(&entries).unwrap_err();
        assert!(err.to_string().contains("MasterLC-UCB-0.05"), "{err}");
    }

    #[test]
    fn effective_config_round_trips() {
        let text = r#"
            budgets = [100]
            seeds = [1]
            output_dir = "out"
            [traces]
            path = "t.csv"
            [[policies]]
            kind = "master_lc_ucb"
            rho = [0.0, 0.05]
            [[policies]]
            kind = "best_k_rewards"
            k = 7
        "#;
        let config = parse(text).unwrap();
        let (specs, _) = expand_policies(&config.policies).unwrap();
        assert_eq!(specs.len(), 3);
        let echo = config.effective(&specs);
        let reparsed = parse(&echo.to_toml()).unwrap();
        let (respecs, warnings) = expand_policies(&reparsed.policies).unwrap();
        assert_eq!(respecs, specs);
        assert!(warnings.is_empty());
        assert_eq!(reparsed, echo);
    }

    #[test]
    fn overhead_modes_parse() {
        let text = r#"
            budgets = [100]
            seeds = [1]
            output_dir = "out"
            [traces]
            path = "t.csv"
            [overhead]
            mode = "fixed"
            seconds = 0.05
            [[policies]]
            kind = "round_robin"
        "#;
        let config = parse(text).unwrap();
        assert_eq!(config.overhead, OverheadModel::Fixed { seconds: 0.05 });
        let bad = text.replace("seconds = 0.05", "seconds = 11.0");
        assert!(parse(&bad).is_err(), "fixed overhead above dt must fail");
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = BASE.replace("dt = 10.0", "dt = 10.0\nbogus = 1");
        assert!(matches!(parse(&text), Err(ConfigError::Parse { .. })));
    }
}
