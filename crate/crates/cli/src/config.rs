//! Experiment names and configuration resolution.
//!
//! Values are layered: built-in defaults, then the top level of the config
//! file, then the file's section for the experiment, then command-line flags.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nic_core::capacity::DEFAULT_SNR_GRID;
use nic_core::estimation::IntervalMethod;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DepthScan,
    BiasScan,
    PhaseBoundary,
    CapacityPhase,
    CapacitySanity,
    Ablations,
    Visibility,
    Benchmark,
    Table1,
    Table3,
    AngleOpt,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::DepthScan,
        Experiment::BiasScan,
        Experiment::PhaseBoundary,
        Experiment::CapacityPhase,
        Experiment::CapacitySanity,
        Experiment::Ablations,
        Experiment::Visibility,
        Experiment::Benchmark,
        Experiment::Table1,
        Experiment::Table3,
        Experiment::AngleOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::DepthScan => "depth-scan",
            Experiment::BiasScan => "bias-scan",
            Experiment::PhaseBoundary => "phase-boundary",
            Experiment::CapacityPhase => "capacity-phase",
            Experiment::CapacitySanity => "capacity-sanity",
            Experiment::Ablations => "ablations",
            Experiment::Visibility => "visibility",
            Experiment::Benchmark => "benchmark",
            Experiment::Table1 => "table1",
            Experiment::Table3 => "table3",
            Experiment::AngleOpt => "angle-opt",
        }
    }

    /// What the experiment reproduces.
    pub fn exhibit(self) -> &'static str {
        match self {
            Experiment::DepthScan => "closed-form score versus depth for several biases",
            Experiment::BiasScan => "bias scan at fixed depth n = 10",
            Experiment::PhaseBoundary => {
                "finite-depth critical bias for a one-bit budget, 1 <= n <= 40"
            }
            Experiment::CapacityPhase => "critical bias for several capacity budgets",
            Experiment::CapacitySanity => {
                "capacity accounting probes: hard, packed and BPSK/AWGN interfaces"
            }
            Experiment::Ablations => "strict bottleneck models and leaky controls at N = 8",
            Experiment::Visibility => "quantum angle and visibility sweep at n = 10",
            Experiment::Benchmark => "classical one-bit benchmark against nested protocols",
            Experiment::Table1 => "closed-form score table, n in {1,5,10,20}",
            Experiment::Table3 => "coarse scan of the quantum angle family",
            Experiment::AngleOpt => "regularized optimization of the measurement angle",
        }
    }

    /// Experiments that cannot run without a seed.
    pub fn requires_seed(self) -> bool {
        matches!(self, Experiment::CapacitySanity | Experiment::Ablations)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optional settings from a config file section or command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub episodes: Option<u64>,
    pub grid: Option<Vec<f64>>,
    pub depths: Option<Vec<u32>>,
    pub n_max: Option<u32>,
    pub interval: Option<IntervalMethod>,
    pub level: Option<f64>,
    pub steps: Option<usize>,
    pub seeds: Option<u64>,
    pub trace: Option<u64>,
}

impl Overrides {
    /// Fields set in `other` win.
    pub fn merge(self, other: Overrides) -> Overrides {
        Overrides {
            seed: other.seed.or(self.seed),
            episodes: other.episodes.or(self.episodes),
            grid: other.grid.or(self.grid),
            depths: other.depths.or(self.depths),
            n_max: other.n_max.or(self.n_max),
            interval: other.interval.or(self.interval),
            level: other.level.or(self.level),
            steps: other.steps.or(self.steps),
            seeds: other.seeds.or(self.seeds),
            trace: other.trace.or(self.trace),
        }
    }
}

/// Reads the top-level keys and the `[experiment]` section of a TOML file.
pub fn load_config_file(path: &Path, experiment: Experiment) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;
    let mut sections = toml::Table::new();
    let keys: Vec<String> = table.keys().cloned().collect();
    for key in keys {
        if table[&key].is_table() {
            if Experiment::from_name(&key).is_none() {
                bail!(
                    "config {}: unknown experiment section [{key}]",
                    path.display()
                );
            }
            sections.insert(key.clone(), table.remove(&key).expect("key present"));
        }
    }
    let common: Overrides = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("config {}: top-level keys", path.display()))?;
    let section: Overrides = match sections.remove(experiment.name()) {
        Some(v) => v
            .try_into()
            .with_context(|| format!("config {}: section [{experiment}]", path.display()))?,
        None => Overrides::default(),
    };
    Ok(common.merge(section))
}

/// Fully resolved experiment settings. Everything here feeds the config
/// hash; output location and worker count do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub episodes: u64,
    /// The experiment's primary parameter grid (biases, capacities, SNRs,
    /// visibilities, bottleneck sizes or penalties).
    pub grid: Vec<f64>,
    pub depths: Vec<u32>,
    pub interval: IntervalMethod,
    pub level: f64,
    /// Training steps per strict model.
    pub steps: usize,
    /// Independent training seeds per bottleneck size.
    pub seeds: u64,
    /// Episodes exported as JSON lines per Monte Carlo point.
    pub trace: u64,
}

fn default_grid(experiment: Experiment) -> Vec<f64> {
    match experiment {
        Experiment::DepthScan | Experiment::Table1 => vec![0.5, 0.7, FRAC_1_SQRT_2, 0.72, 0.75],
        Experiment::BiasScan => (0..=200).map(|k| k as f64 / 200.0).collect(),
        Experiment::PhaseBoundary => vec![1.0],
        Experiment::CapacityPhase => vec![1.0, 2.0, 4.0, 8.0],
        Experiment::CapacitySanity => DEFAULT_SNR_GRID.to_vec(),
        Experiment::Ablations => vec![1.0, 3.0],
        Experiment::Visibility => vec![1.0, 0.95, 0.9, 0.85, 0.8],
        Experiment::Benchmark => vec![],
        Experiment::Table3 => (0..=4)
            .map(|k| k as f64 * std::f64::consts::PI / 16.0)
            .collect(),
        Experiment::AngleOpt => vec![0.0, 0.01, 0.03, 0.1, 0.2, 0.3, 0.5, 1.0, 3.0],
    }
}

fn default_depths(experiment: Experiment, n_max: Option<u32>) -> Vec<u32> {
    let upto = |n: u32| (1..=n).collect::<Vec<u32>>();
    match experiment {
        Experiment::DepthScan => upto(n_max.unwrap_or(20)),
        Experiment::PhaseBoundary | Experiment::CapacityPhase => upto(n_max.unwrap_or(40)),
        Experiment::Benchmark => upto(n_max.unwrap_or(16)),
        Experiment::Table1 => vec![1, 5, 10, 20],
        Experiment::CapacitySanity | Experiment::Ablations => vec![3],
        Experiment::BiasScan
        | Experiment::Visibility
        | Experiment::Table3
        | Experiment::AngleOpt => {
            vec![n_max.unwrap_or(10)]
        }
    }
}

impl ExperimentConfig {
    pub fn resolve(experiment: Experiment, o: Overrides) -> Result<Self> {
        let grid = o.grid.unwrap_or_else(|| default_grid(experiment));
        let depths = o
            .depths
            .unwrap_or_else(|| default_depths(experiment, o.n_max));
        let config = ExperimentConfig {
            experiment,
            seed: o.seed,
            episodes: o.episodes.unwrap_or(100_000),
            grid,
            depths,
            interval: o.interval.unwrap_or_default(),
            level: o.level.unwrap_or(0.95),
            steps: o.steps.unwrap_or(20_000),
            seeds: o.seeds.unwrap_or(5),
            trace: o.trace.unwrap_or(0),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.experiment;
        if e.requires_seed() && self.seed.is_none() {
            bail!("experiment {e} is stochastic and needs --seed");
        }
        if self.grid.is_empty() && e != Experiment::Benchmark {
            bail!("experiment {e}: parameter grid is empty");
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            bail!("experiment {e}: grid values must be finite");
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            bail!("experiment {e}: depths must be non-empty and positive");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            bail!("confidence level {} outside (0, 1)", self.level);
        }
        if self.episodes == 0 {
            bail!("episodes must be positive");
        }
        if e == Experiment::Ablations && self.seeds == 0 {
            bail!("ablations need at least one training seed");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
            let json = serde_json::to_string(&e).unwrap();
            assert_eq!(json, format!("\"{}\"", e.name()));
        }
    }

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nic.toml");
        std::fs::write(&path, "episodes = 10\nseed = 1\n[table3]\nepisodes = 20\n").unwrap();
        let file = load_config_file(&path, Experiment::Table3).unwrap();
        assert_eq!(file.episodes, Some(20));
        assert_eq!(file.seed, Some(1));
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let config = ExperimentConfig::resolve(Experiment::Table3, file.merge(flags)).unwrap();
        assert_eq!((config.seed, config.episodes), (Some(9), 20));

        std::fs::write(&path, "[nonsense]\nseed = 1\n").unwrap();
        assert!(load_config_file(&path, Experiment::Table3).is_err());
        std::fs::write(&path, "sede = 1\n").unwrap();
        assert!(load_config_file(&path, Experiment::Table3).is_err());
    }

    #[test]
    fn stochastic_experiments_need_a_seed() {
        assert!(ExperimentConfig::resolve(Experiment::Ablations, Overrides::default()).is_err());
        assert!(ExperimentConfig::resolve(Experiment::Table1, Overrides::default()).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::resolve(Experiment::Table1, Overrides::default()).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.level = 0.9;
        assert_ne!(a.hash(), b.hash());
    }
}
