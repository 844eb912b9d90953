//! Config-driven experiment suites and the adversarial reward search.
//!
//! A run produces a deterministic `report.json`, CSV matrices, and a separate
//! `metadata.json` holding wall-clock timings.

mod adversarial;
mod config;
pub mod de;
mod suites;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use adversarial::{
    adversarial_search, evaluate_rewards, AdversarialReport, CandidateEvaluation, InvariantReport,
    CONTRACTION_SLACK, LIPSCHITZ_SLACK,
};
pub use config::{AdversarialConfig, AdversarialObjective, EnvironmentKind, ExperimentConfig, SuiteName};
pub use suites::run_suite;

use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BISIM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "bisim-out";

/// Output directory: explicit choice, then config, then the environment
/// variable, then [`DEFAULT_OUT_DIR`].
pub fn resolve_output_dir(explicit: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, seed: u64, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            seed,
            passed: value <= limit,
            value,
            limit,
        }
    }

    /// A boolean check, recorded as value 1 (true) or 0 against limit 1.
    pub fn holds(name: &str, seed: u64, ok: bool) -> Self {
        Self {
            name: name.to_string(),
            seed,
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
        }
    }
}

/// Statistics of the base MDP's metric; identical across suites sharing a
/// base MDP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub seed: u64,
    pub n_states: usize,
    pub gamma: f64,
    pub iterations: usize,
    pub certified_error: f64,
    pub array_mean: f64,
    pub array_std: f64,
    pub frobenius: f64,
    pub spectral_radius: f64,
    pub condition_number: Option<f64>,
    pub eigen_entropy: Option<f64>,
    /// Random-pair estimate of the contraction factor.
    pub empirical_contraction: f64,
    /// Tail ratio of successive Picard residuals.
    pub residual_contraction: Option<f64>,
}

/// Numerical constants in force for a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    pub metric_tolerance: f64,
    pub drift_tolerance: f64,
    pub triangle_slack: f64,
    pub contraction_slack: f64,
    pub lipschitz_slack: f64,
    pub loss_slack: f64,
    pub transport_gap_tolerance: f64,
    pub fixpoint_tolerance: f64,
    pub jacobi_tolerance: f64,
    pub zero_eigen_threshold: f64,
    pub entropy_base: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub config: ExperimentConfig,
    pub constants: Constants,
    pub baseline: Vec<BaselineRow>,
    pub rows: Vec<serde_json::Value>,
    pub checks: Vec<Check>,
    /// Observations that are reported but do not fail the run.
    pub findings: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub suite: SuiteName,
    pub started_unix_seconds: u64,
    pub total_seconds: f64,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub report: SuiteReport,
    pub metadata: RunMetadata,
    /// Additional files as `(name, contents)`.
    pub files: Vec<(String, String)>,
}

impl SuiteOutcome {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }

    /// Writes `report.json`, `metadata.json` and the CSV files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metadata = serde_json::to_string_pretty(&self.metadata)? + "\n";
        let mut written = Vec::new();
        let items = [
            ("report.json".to_string(), self.report_json()),
            ("metadata.json".to_string(), metadata),
        ];
        for (name, contents) in items.iter().chain(&self.files) {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
