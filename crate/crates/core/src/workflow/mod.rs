//! Three-phase experiment workflow over a run directory: offline training
//! and search, online candidate testing, launch with a randomized holdout,
//! and backtesting the launched policy against that holdout.
//!
//! Every command reads a versioned JSON [`ExperimentConfig`] and writes
//! plain JSON/CSV artifacts under `<out>/<config hash>/`.

mod cache;
mod commands;
mod report;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{AssignmentCache, CachedAssignment};
pub use commands::{
    cmd_backtest, cmd_launch, cmd_phase1, cmd_phase2, cmd_report, cmd_simulate, hypervolume_contributions,
    CandidateEntry, CandidateFile, CalibrationCheck, CalibrationGate, CommandOutcome, LaunchManifest,
    OnlineComparison, OutcomeComparison, Phase1Summary, Recommendation,
};
pub use report::{front_csv, BacktestReport, GroupStats, OracleComparison, OutcomeBacktest};

use crate::data::{DataError, LogDataset, OutcomeSpec};
use crate::hte::{BaseLearnerSpec, HteError};
use crate::mopt::MoptError;
use crate::ope::{Estimator, OpeError};
use crate::simulator::{ScenarioError, ScenarioSpec};

pub const CONFIG_VERSION: u32 = 1;
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("run directory {0} is locked by another command (delete the .lock file if it is stale)")]
    Locked(PathBuf),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Hte(#[from] HteError),
    #[error(transparent)]
    Ope(#[from] OpeError),
    #[error(transparent)]
    Mopt(#[from] MoptError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

fn default_log_size() -> usize {
    20_000
}
fn default_train_fraction() -> f64 {
    0.5
}
fn default_holdout_fraction() -> f64 {
    0.05
}
fn default_budget() -> usize {
    40
}
fn default_true() -> bool {
    true
}
fn default_k() -> usize {
    8
}
fn default_rounds() -> usize {
    4
}
fn default_online_units() -> usize {
    40_000
}
fn default_launch_units() -> usize {
    10_000
}
fn default_calibration_z() -> f64 {
    3.0
}
fn default_oracle_samples() -> usize {
    200_000
}

/// Experiment definition. Unknown fields are rejected; omitted fields
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Ground truth for simulated logs and the online environment.
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    /// Randomized log to train on instead of a simulated one; relative
    /// paths resolve against the config file's directory.
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    /// Arm count of an external log; taken from the scenario otherwise.
    #[serde(default)]
    pub arms: Option<usize>,
    /// Outcome names and directions; defaults to the scenario's.
    #[serde(default)]
    pub outcomes: Option<Vec<OutcomeSpec>>,
    #[serde(default = "default_log_size")]
    pub log_size: usize,
    #[serde(default)]
    pub learner: BaseLearnerSpec,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub propensity_clip: Option<f64>,
    /// Share of the non-holdout log used to fit the CATE model; the rest
    /// scores policies offline.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_holdout_fraction")]
    pub holdout_fraction: f64,
    #[serde(default = "default_budget")]
    pub offline_budget: usize,
    /// Also search the weights-only family for comparison.
    #[serde(default = "default_true")]
    pub bias_free_front: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_rounds")]
    pub online_rounds: usize,
    #[serde(default = "default_online_units")]
    pub online_units_per_round: usize,
    #[serde(default = "default_launch_units")]
    pub launch_units: usize,
    /// Calibration gate: a contrast fails when its gap exceeds this many
    /// standard errors.
    #[serde(default = "default_calibration_z")]
    pub calibration_z: f64,
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub rounds: Option<usize>,
}

/// Seed salts for the independent random consumers of a run.
pub(crate) mod salts {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const MODEL: u64 = 3;
    pub const SEARCH: u64 = 4;
    pub const ONLINE: u64 = 5;
    pub const LAUNCH: u64 = 6;
    pub const ORACLE: u64 = 7;
}

impl ExperimentConfig {
    /// Default settings around the built-in benchmark scenario.
    pub fn benchmark() -> Self {
        Self::from_scenario(ScenarioSpec::benchmark())
    }

    pub fn from_scenario(scenario: ScenarioSpec) -> Self {
        let mut cfg: Self = serde_json::from_str(&format!("{{\"version\":{CONFIG_VERSION}}}")).expect("defaults");
        cfg.name = "benchmark".into();
        cfg.scenario = Some(scenario);
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, WorkflowError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| WorkflowError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving `log_path` against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = read_text(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(p) = &cfg.log_path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.log_path = Some(base.join(p));
            }
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(r) = o.rounds {
            self.online_rounds = r;
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        let bad = |m: String| Err(WorkflowError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.scenario.is_none() && self.log_path.is_none() {
            return bad("need a scenario or a log_path".into());
        }
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        if self.scenario.is_none() && self.arms.is_none() {
            return bad("an external log needs `arms`".into());
        }
        if let (Some(s), Some(a)) = (&self.scenario, self.arms) {
            if s.n != a {
                return bad(format!("arms = {a} but the scenario has {} arms", s.n));
            }
        }
        if let (Some(s), Some(o)) = (&self.scenario, &self.outcomes) {
            if o.len() != s.m {
                return bad(format!("{} outcome specs for {} outcomes", o.len(), s.m));
            }
        }
        self.learner.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} not in (0, 1)", self.train_fraction));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction {} not in [0, 1)", self.holdout_fraction));
        }
        if !(0.02..=0.05).contains(&self.holdout_fraction) {
            log::warn!("holdout_fraction {} is outside the usual 2%-5%", self.holdout_fraction);
        }
        if let Some(c) = self.propensity_clip {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("propensity_clip {c} not in (0, 1]"));
            }
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.online_rounds == 0 || self.online_units_per_round == 0 || self.launch_units == 0 {
            return bad("online_rounds, online_units_per_round and launch_units must be positive".into());
        }
        if self.log_size == 0 || self.oracle_samples == 0 {
            return bad("log_size and oracle_samples must be positive".into());
        }
        if !(self.calibration_z > 0.0) {
            return bad(format!("calibration_z {} must be positive", self.calibration_z));
        }
        Ok(())
    }

    fn check_files(&self) -> Result<(), WorkflowError> {
        if let Some(p) = &self.log_path {
            if !p.is_file() {
                return Err(WorkflowError::Config(format!("log_path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn arm_count(&self) -> usize {
        self.scenario.as_ref().map_or_else(|| self.arms.unwrap_or(0), |s| s.n)
    }

    pub fn outcome_specs(&self) -> Option<Vec<OutcomeSpec>> {
        self.outcomes.clone().or_else(|| self.scenario.as_ref().map(ScenarioSpec::outcome_specs))
    }

    /// Scenario with the configured outcome specs applied.
    pub fn require_scenario(&self) -> Result<ScenarioSpec, WorkflowError> {
        let mut s = self
            .scenario
            .clone()
            .ok_or_else(|| WorkflowError::Config("this command needs a simulated scenario".into()))?;
        if let Some(o) = &self.outcomes {
            s.outcomes = Some(o.clone());
        }
        Ok(s)
    }

    /// Hex SHA-256 prefix of the canonical config JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn seed_for(&self, salt: u64) -> u64 {
        crate::rng::derive_seed(self.seed, salt)
    }

    /// Randomized log for phase 1: the external file or a simulated one.
    pub fn load_or_generate_log(&self) -> Result<LogDataset, WorkflowError> {
        match &self.log_path {
            Some(p) => Ok(LogDataset::load(p, self.arm_count(), self.outcome_specs())?),
            None => {
                let s = self.require_scenario()?;
                Ok(crate::simulator::generate_log(&s, self.log_size, self.seed_for(salts::DATA)))
            }
        }
    }
}

/// A run directory, held under an advisory lock for the command's lifetime.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    lock: PathBuf,
}

impl RunDir {
    /// Creates `<out>/<config hash>`, takes the lock and writes the
    /// effective config.
    pub fn open(out: &Path, config: ExperimentConfig) -> Result<Self, WorkflowError> {
        config.validate()?;
        let path = out.join(config.hash());
        fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        let lock = path.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(WorkflowError::Locked(path)),
            Err(e) => return Err(io_err(&lock, e)),
        }
        let dir = Self { path, config, lock };
        dir.write_text("config.json", &dir.config.to_json())?;
        Ok(dir)
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.file(rel).is_file()
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf, WorkflowError> {
        let p = self.file(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, WorkflowError> {
        self.write_text(rel, &(serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"))
    }

    pub fn write_log(&self, rel: &str, log: &LogDataset) -> Result<PathBuf, WorkflowError> {
        let p = self.file(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        log.save(&p)?;
        Ok(p)
    }

    pub fn read_text(&self, rel: &str, hint: &str) -> Result<String, WorkflowError> {
        let p = self.file(rel);
        if !p.is_file() {
            return Err(WorkflowError::MissingArtifact { path: p, hint: hint.into() });
        }
        read_text(&p)
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str, hint: &str) -> Result<T, WorkflowError> {
        let text = self.read_text(rel, hint)?;
        serde_json::from_str(&text).map_err(|e| WorkflowError::Json { path: self.file(rel), source: e })
    }

    pub fn read_log(&self, rel: &str, hint: &str) -> Result<LogDataset, WorkflowError> {
        let p = self.file(rel);
        if !p.is_file() {
            return Err(WorkflowError::MissingArtifact { path: p, hint: hint.into() });
        }
        Ok(LogDataset::load(&p, self.config.arm_count(), self.config.outcome_specs())?)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn io_err(path: &Path, e: std::io::Error) -> WorkflowError {
    WorkflowError::Io { path: path.to_path_buf(), source: e }
}

fn read_text(path: &Path) -> Result<String, WorkflowError> {
    let mut s = String::new();
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    std::io::Read::read_to_string(&mut f, &mut s).map_err(|e| io_err(path, e))?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_a_minimal_config() {
        let cfg = ExperimentConfig::benchmark();
        assert_eq!(cfg.k, 8);
        assert_eq!(cfg.holdout_fraction, 0.05);
        assert_eq!(cfg.offline_budget, 40);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::benchmark();
        cfg.version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::benchmark();
        cfg.holdout_fraction = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::benchmark();
        cfg.scenario = None;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"version":1,"bogus":3}"#).is_err());
    }

    #[test]
    fn hash_tracks_overrides() {
        let a = ExperimentConfig::benchmark();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.apply(&Overrides { seed: Some(9), ..Default::default() });
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::benchmark();
        let first = RunDir::open(tmp.path(), cfg.clone()).unwrap();
        assert!(matches!(RunDir::open(tmp.path(), cfg.clone()), Err(WorkflowError::Locked(_))));
        drop(first);
        assert!(RunDir::open(tmp.path(), cfg).is_ok());
    }
}
