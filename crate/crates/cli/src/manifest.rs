//! Run manifests: one TOML document per command, written after every data
//! file so its presence marks a completed run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const SIMULATE_MANIFEST: &str = "manifest.toml";
pub const ANALYZE_MANIFEST: &str = "analysis.toml";
pub const REFERENCE_MANIFEST: &str = "reference.toml";

pub fn tool_version() -> String {
    format!("wgqed {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Failure {
    pub message: String,
    pub trajectory: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub preset: Option<String>,
    pub rng: String,
    pub status: Status,
    pub wall_clock_seconds: f64,
    pub trajectories_completed: u64,
    pub failure: Option<Failure>,
    /// Detection counts per channel (`R`, `L`).
    pub event_counts: BTreeMap<String, u64>,
    /// SHA-256 of every file the command wrote or consumed.
    pub files: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(command: &str, preset: Option<&str>, config: &ExperimentConfig) -> Self {
        Self {
            tool: tool_version(),
            command: command.to_string(),
            preset: preset.map(str::to_string),
            rng: wgqed::rng::RNG_ALGORITHM.to_string(),
            status: Status::Ok,
            wall_clock_seconds: 0.0,
            trajectories_completed: 0,
            failure: None,
            event_counts: BTreeMap::new(),
            files: BTreeMap::new(),
            config: config.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always serializable")
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, self.to_toml()).map_err(CliError::io(format!("writing {}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Stale(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PartialConfig;

    #[test]
    fn manifest_round_trips() {
        let cfg = PartialConfig::default().resolve().unwrap();
        let mut m = RunManifest::new("simulate", Some("fig3"), &cfg);
        m.event_counts.insert("R".into(), 3);
        m.files.insert("events.tsv".into(), "ab".into());
        m.failure = Some(Failure { message: "boom".into(), trajectory: Some(4) });
        let back: RunManifest = toml::from_str(&m.to_toml()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config, cfg);
    }
}
