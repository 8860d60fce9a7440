use std::fs;
use std::path::{Path, PathBuf};

use super::pipeline::TripleBatch;
use super::Stage;
use crate::error::{Error, Result};
use crate::graph::persist::write_atomically;

pub fn batch_path(run_dir: &Path, stage: Stage, batch_index: usize) -> PathBuf {
    run_dir.join(stage.as_str()).join(format!("{batch_index}.jsonl"))
}

/// Writes `records` as JSON lines, replacing any existing file.
pub fn serialize_batch(records: &[TripleBatch], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_atomically(path, &out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub file: PathBuf,
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct BatchLoad {
    pub batches: Vec<TripleBatch>,
    pub errors: Vec<LineError>,
}

/// Batch files present for `stage`, as (batch index, path) in index order.
pub fn stage_files(run_dir: &Path, stage: Stage) -> Result<Vec<(usize, PathBuf)>> {
    let dir = run_dir.join(stage.as_str());
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".jsonl"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(index) = index {
            files.push((index, path));
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every batch file under `run_dir`, stage by stage in index order.
/// Lines that fail to parse are reported and skipped.
pub fn load_batches(run_dir: impl AsRef<Path>) -> Result<BatchLoad> {
    let run_dir = run_dir.as_ref();
    let mut load = BatchLoad::default();
    for stage in Stage::ALL {
        for (_, path) in stage_files(run_dir, stage)? {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<TripleBatch>(line) {
                    Ok(b) => load.batches.push(b),
                    Err(e) => load.errors.push(LineError {
                        file: path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{DocMetadata, ParseStatus, Triple};

    fn record(i: usize) -> TripleBatch {
        TripleBatch {
            stage: Stage::EntityRelation,
            batch_index: i / 10,
            chunk_id: format!("d{i}#0"),
            doc_id: format!("d{i}"),
            seq_no: 0,
            text: format!("text {i}, \"quoted\"\nline"),
            metadata: DocMetadata {
                language: Some("en".into()),
                source: None,
            },
            raw_output: "[]".into(),
            triples: vec![Triple::Relation {
                head: "a".into(),
                relation: "r".into(),
                tail: format!("t{i}"),
            }],
            parse_status: ParseStatus::Ok,
            off_vocabulary: 0,
            error: None,
        }
    }

    #[test]
    fn round_trip_and_corrupt_line() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<TripleBatch> = (0..100).map(record).collect();
        for (b, group) in records.chunks(10).enumerate() {
            serialize_batch(group, batch_path(dir.path(), Stage::EntityRelation, b)).unwrap();
        }
        let load = load_batches(dir.path()).unwrap();
        assert!(load.errors.is_empty());
        assert_eq!(load.batches, records);

        let p = batch_path(dir.path(), Stage::EntityRelation, 3);
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "{garbled";
        fs::write(&p, lines.join("\n")).unwrap();
        let load = load_batches(dir.path()).unwrap();
        assert_eq!(load.batches.len(), 99);
        assert_eq!(load.errors.len(), 1);
        assert_eq!(load.errors[0].line, 5);
        assert!(load.errors[0].file.ends_with("ee/3.jsonl"));
    }

    #[test]
    fn empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let load = load_batches(dir.path()).unwrap();
        assert!(load.batches.is_empty() && load.errors.is_empty());
    }
}
