//! Audit configuration files.
//!
//! A config file is JSON that points at the manifest CSV and (for comparison
//! audits) the CVR JSON Lines file; relative paths are resolved against the
//! directory holding the config. N_M is always taken from the manifest.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use ezaudit_core::contest::ContestSetup;
use ezaudit_core::comparison::DEFAULT_GAMMA;
use ezaudit_core::sampling::AuditSeed;
use ezaudit_core::scenario::BallotCounts;
use ezaudit_core::session::{AuditConfig, AuditMethod, MissingCvrPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvr::{read_cvr, CvrError};
use crate::manifest_csv::{parse_manifest, CsvError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Manifest { path: PathBuf, source: CsvError },
    #[error("{path}: {source}")]
    Cvr { path: PathBuf, source: CvrError },
    #[error("seed: {0}")]
    Seed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub method: AuditMethod,
    pub manifest_csv: PathBuf,
    #[serde(default)]
    pub cvr_jsonl: Option<PathBuf>,
    pub contests: Vec<ContestSetup>,
    #[serde(default)]
    pub n_oracle: Option<u64>,
    #[serde(default)]
    pub n_upper: Option<u64>,
    pub risk_limit: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Seed material as hex text.
    pub seed: String,
    #[serde(default)]
    pub seed_note: String,
    #[serde(default)]
    pub escalation_cap: Option<u64>,
    #[serde(default)]
    pub acknowledge_margin_risk: bool,
    #[serde(default)]
    pub missing_cvr: MissingCvrPolicy,
    #[serde(default)]
    pub compliance_attestation: Option<String>,
}

fn open(path: &Path) -> Result<BufReader<File>, ConfigError> {
    File::open(path).map(BufReader::new).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_reader(open(path)?).map_err(|source| ConfigError::Json {
            path: path.to_owned(),
            source,
        })
    }

    /// Load the referenced files and assemble a session config.
    pub fn resolve(&self, base_dir: &Path) -> Result<AuditConfig, ConfigError> {
        let manifest_path = base_dir.join(&self.manifest_csv);
        let manifest = parse_manifest(open(&manifest_path)?).map_err(|source| ConfigError::Manifest {
            path: manifest_path,
            source,
        })?;
        let cvr = match &self.cvr_jsonl {
            Some(p) => {
                let path = base_dir.join(p);
                Some(read_cvr(open(&path)?).map_err(|source| ConfigError::Cvr { path, source })?)
            }
            None => None,
        };
        let seed_bytes = hex::decode(self.seed.trim()).map_err(|e| ConfigError::Seed(e.to_string()))?;
        let seed = AuditSeed::new(seed_bytes, self.seed_note.clone()).map_err(|e| ConfigError::Seed(e.to_string()))?;
        Ok(AuditConfig {
            method: self.method,
            counts: BallotCounts {
                n_manifest: manifest.total_listed(),
                n_oracle: self.n_oracle,
                n_upper: self.n_upper,
            },
            manifest,
            contests: self.contests.clone(),
            risk_limit: self.risk_limit,
            gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
            seed,
            escalation_cap: self.escalation_cap,
            acknowledge_margin_risk: self.acknowledge_margin_risk,
            cvr,
            missing_cvr: self.missing_cvr,
            compliance_attestation: self.compliance_attestation.clone(),
        })
    }
}

/// Read a config file and everything it references.
pub fn load_config(path: &Path) -> Result<AuditConfig, ConfigError> {
    let file = ConfigFile::read(path)?;
    file.resolve(path.parent().unwrap_or_else(|| Path::new(".")))
}
