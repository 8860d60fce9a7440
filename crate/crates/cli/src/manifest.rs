use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kgforge::extract::pipeline::{BatchSink, DirSink};
use kgforge::extract::Stage;
use kgforge::extract::TripleBatch;
use kgforge::GraphVariant;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractState {
    pub batch_count: usize,
    pub done: BTreeSet<usize>,
    pub complete: bool,
}

/// What a run directory holds and which stages have finished.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub extract: ExtractState,
    pub build: bool,
    pub induce: bool,
    /// Graph variant the indexes were built over.
    pub index: Option<GraphVariant>,
    /// Paths relative to the run directory.
    pub files: BTreeSet<String>,
}

impl RunManifest {
    pub fn path(run: &Path) -> PathBuf {
        run.join(MANIFEST)
    }

    pub fn load(run: &Path) -> Result<Option<Self>> {
        let p = Self::path(run);
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let m = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        Ok(Some(m))
    }

    pub fn require(run: &Path) -> Result<Self> {
        Self::load(run)?.ok_or_else(|| {
            CliError::Usage(format!("{} has no {MANIFEST}; run `kgforge extract` first", run.display()))
                .into()
        })
    }

    pub fn save(&self, run: &Path) -> Result<()> {
        let p = Self::path(run);
        let tmp = p.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &p).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }

    pub fn record(&mut self, run: &Path, file: &Path) {
        let rel = file.strip_prefix(run).unwrap_or(file);
        self.files.insert(rel.to_string_lossy().replace('\\', "/"));
    }

    pub fn require_stage(&self, stage: &str, done: bool) -> Result<()> {
        if done {
            Ok(())
        } else {
            Err(CliError::Usage(format!("stage `{stage}` has not completed for this run")).into())
        }
    }

    /// Marks the graph rebuilt, which invalidates everything downstream.
    pub fn rebuilt(&mut self) {
        self.build = true;
        self.induce = false;
        self.index = None;
    }
}

/// Writes batch files under `<run>/batches` and records finished batches in
/// the manifest, so a rerun skips them.
pub struct ManifestSink<'a> {
    pub run: &'a Path,
    pub manifest: &'a mut RunManifest,
    inner: DirSink,
    pending: Vec<PathBuf>,
    failed: bool,
}

impl<'a> ManifestSink<'a> {
    pub fn new(run: &'a Path, manifest: &'a mut RunManifest) -> Self {
        ManifestSink {
            run,
            manifest,
            inner: DirSink::new(run.join("batches")),
            pending: Vec::new(),
            failed: false,
        }
    }
}

impl BatchSink for ManifestSink<'_> {
    fn is_done(&self, batch_index: usize) -> bool {
        self.manifest.extract.done.contains(&batch_index)
    }

    fn write(
        &mut self,
        batch_index: usize,
        stage: Stage,
        records: &[TripleBatch],
    ) -> kgforge::Result<Option<PathBuf>> {
        let path = self.inner.write(batch_index, stage, records)?;
        self.failed |= records.iter().any(|r| r.error.is_some());
        self.pending.extend(path.clone());
        Ok(path)
    }

    fn finished(&mut self, batch_index: usize) -> kgforge::Result<()> {
        for p in std::mem::take(&mut self.pending) {
            self.manifest.record(self.run, &p);
        }
        // batches with gateway failures are redone on the next run
        if !std::mem::take(&mut self.failed) {
            self.manifest.extract.done.insert(batch_index);
        }
        self.manifest
            .save(self.run)
            .map_err(|e| kgforge::Error::Format(format!("saving manifest: {e}")))
    }
}
