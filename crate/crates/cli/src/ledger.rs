//! Run ledger: per-stage seeds, timings and artifact content hashes, so a
//! re-run with the same configuration can be checked for byte equality.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dyve_core::rng::fnv1a64;

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct RunLedger {
    pub master_seed: u64,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    pub duration_ms: u64,
    /// `"ok"`, or `"failed: <reason>"` when the stage halted the pipeline.
    pub status: String,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ArtifactRecord {
    /// Path relative to the output directory.
    pub path: String,
    /// FNV-1a 64 content hash, hex.
    pub hash: String,
}

impl RunLedger {
    pub fn path(output_dir: &Path) -> PathBuf {
        output_dir.join("ledger.json")
    }

    pub fn load_or_new(output_dir: &Path, master_seed: u64) -> Result<RunLedger> {
        let path = Self::path(output_dir);
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(RunLedger { master_seed, stages: Vec::new() })
        }
    }

    /// Re-running a stage replaces its previous record.
    pub fn record(&mut self, stage: StageRecord) {
        self.stages.retain(|s| s.name != stage.name);
        self.stages.push(stage);
    }

    pub fn save(&self, output_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(output_dir)
            .with_context(|| format!("cannot create {}", output_dir.display()))?;
        let path = Self::path(output_dir);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

/// Run a stage body, recording success or failure in the ledger either way.
pub fn run_stage<T>(
    output_dir: &Path,
    master_seed: u64,
    name: &str,
    seed: u64,
    body: impl FnOnce(&mut StageScope) -> Result<T>,
) -> Result<T> {
    let mut ledger = RunLedger::load_or_new(output_dir, master_seed)?;
    let mut scope = StageScope::begin(output_dir, name, seed);
    match body(&mut scope) {
        Ok(value) => {
            ledger.record(scope.finish("ok"));
            ledger.save(output_dir)?;
            Ok(value)
        }
        Err(e) => {
            ledger.record(scope.finish(&format!("failed: {e:#}")));
            ledger.save(output_dir)?;
            Err(e)
        }
    }
}

/// Collects artifact hashes while a stage runs.
pub struct StageScope {
    name: String,
    seed: u64,
    started: Instant,
    output_dir: PathBuf,
    artifacts: Vec<ArtifactRecord>,
}

impl StageScope {
    pub fn begin(output_dir: &Path, name: &str, seed: u64) -> StageScope {
        StageScope {
            name: name.to_string(),
            seed,
            started: Instant::now(),
            output_dir: output_dir.to_path_buf(),
            artifacts: Vec::new(),
        }
    }

    /// Write a file under the output directory and record its hash.
    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<()> {
        let path = self.output_dir.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.push(ArtifactRecord {
            path: relative.to_string(),
            hash: format!("{:016x}", fnv1a64(bytes)),
        });
        Ok(())
    }

    pub fn finish(self, status: &str) -> StageRecord {
        StageRecord {
            name: self.name,
            seed: self.seed,
            duration_ms: self.started.elapsed().as_millis() as u64,
            status: status.to_string(),
            artifacts: self.artifacts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_round_trips_and_replaces_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut ledger = RunLedger::load_or_new(dir.path(), 5).unwrap();
        let mut scope = StageScope::begin(dir.path(), "train-task", 11);
        scope.write("task/model.qnn", b"bytes").unwrap();
        ledger.record(scope.finish("ok"));
        ledger.save(dir.path()).unwrap();

        let mut again = RunLedger::load_or_new(dir.path(), 5).unwrap();
        assert_eq!(again.stages.len(), 1);
        let mut scope = StageScope::begin(dir.path(), "train-task", 11);
        scope.write("task/model.qnn", b"other").unwrap();
        again.record(scope.finish("ok"));
        assert_eq!(again.stages.len(), 1, "stage records replace by name");
        assert_ne!(again.stages[0].artifacts[0].hash, ledger.stages[0].artifacts[0].hash);
    }

    #[test]
    fn failed_stages_are_marked() {
        let dir = tempfile::tempdir().unwrap();
        let result: Result<()> =
            run_stage(dir.path(), 5, "explore", 3, |_| anyhow::bail!("synthetic failure"));
        assert!(result.is_err());
        let ledger = RunLedger::load_or_new(dir.path(), 5).unwrap();
        assert_eq!(ledger.stages.len(), 1);
        assert!(ledger.stages[0].status.starts_with("failed:"), "{}", ledger.stages[0].status);
    }
}
