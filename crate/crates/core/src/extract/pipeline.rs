use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch_io::{batch_path, serialize_batch};
use super::chunk::{chunk_document, TextChunk};
use super::corpus::{filter_corpus, DocMetadata, Document};
use super::parse::{parse_stage_output, ParseStatus, ParsedOutput, Triple};
use super::{build_stage_prompt, PipelineConfig, Stage};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};

/// One chunk's output for one stage; a line of a batch file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleBatch {
    pub stage: Stage,
    pub batch_index: usize,
    pub chunk_id: String,
    pub doc_id: String,
    pub seq_no: usize,
    pub text: String,
    #[serde(default)]
    pub metadata: DocMetadata,
    pub raw_output: String,
    pub triples: Vec<Triple>,
    pub parse_status: ParseStatus,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub off_vocabulary: usize,
    /// Set when the gateway gave up on this chunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Start and finish ticks of one chunk-stage on the run's logical clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEvent {
    pub chunk_id: String,
    pub stage: Stage,
    pub batch_index: usize,
    pub started: u64,
    pub finished: u64,
}

#[derive(Debug, Default)]
pub struct ExtractionOutcome {
    pub chunks: usize,
    pub batch_count: usize,
    /// Records produced by this run, batch by batch, stage by stage.
    pub batches: Vec<TripleBatch>,
    pub events: Vec<StageEvent>,
    pub skipped_batches: Vec<usize>,
    pub gateway_failures: usize,
    pub files: Vec<PathBuf>,
}

/// Where finished batches go.
pub trait BatchSink {
    /// Batches already completed by an earlier run.
    fn is_done(&self, _batch_index: usize) -> bool {
        false
    }

    fn write(&mut self, _batch_index: usize, _stage: Stage, _records: &[TripleBatch]) -> Result<Option<PathBuf>> {
        Ok(None)
    }

    /// Called once all three stages of a batch are written.
    fn finished(&mut self, _batch_index: usize) -> Result<()> {
        Ok(())
    }
}

/// Keeps records in memory only.
pub struct MemorySink;

impl BatchSink for MemorySink {}

/// Writes `<dir>/<stage>/<batch_index>.jsonl`.
pub struct DirSink {
    pub dir: PathBuf,
}

impl DirSink {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        DirSink {
            dir: dir.as_ref().to_path_buf(),
        }
    }
}

impl BatchSink for DirSink {
    fn write(&mut self, batch_index: usize, stage: Stage, records: &[TripleBatch]) -> Result<Option<PathBuf>> {
        let path = batch_path(&self.dir, stage, batch_index);
        serialize_batch(records, &path)?;
        Ok(Some(path))
    }
}

/// Chunks of every English document, in corpus order.
pub fn chunk_corpus(
    docs: impl IntoIterator<Item = Document>,
    cfg: &PipelineConfig,
    gateway: &Gateway,
) -> Vec<TextChunk> {
    let budget = cfg.chunk_budget(cfg.effective_instruction_length(gateway.tokenizer()));
    filter_corpus(docs)
        .flat_map(|d| chunk_document(&d, budget, cfg.lookback, gateway.tokenizer()))
        .collect()
}

/// Runs the three stages over every batch of chunks.
///
/// Within a batch each stage finishes for all chunks before the next stage
/// starts; chunks within a stage run concurrently up to `cfg.in_flight`.
/// Gateway failures mark the chunk's record failed and the run goes on.
pub fn run_extraction(
    docs: impl IntoIterator<Item = Document>,
    cfg: &PipelineConfig,
    gateway: &Gateway,
    sink: &mut dyn BatchSink,
) -> Result<ExtractionOutcome> {
    cfg.validate()?;
    let chunks = chunk_corpus(docs, cfg, gateway);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.in_flight)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let clock = AtomicU64::new(0);
    let events = Mutex::new(Vec::new());
    let mut outcome = ExtractionOutcome {
        chunks: chunks.len(),
        ..Default::default()
    };
    for (batch_index, batch) in chunks.chunks(cfg.batch_size).enumerate() {
        outcome.batch_count += 1;
        if sink.is_done(batch_index) {
            outcome.skipped_batches.push(batch_index);
            continue;
        }
        for stage in Stage::ALL {
            let records: Vec<TripleBatch> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|chunk| {
                        let started = clock.fetch_add(1, Ordering::SeqCst);
                        let rec = run_stage(stage, batch_index, chunk, cfg, gateway);
                        let finished = clock.fetch_add(1, Ordering::SeqCst);
                        events.lock().unwrap().push(StageEvent {
                            chunk_id: chunk.chunk_id.clone(),
                            stage,
                            batch_index,
                            started,
                            finished,
                        });
                        rec
                    })
                    .collect()
            });
            outcome.gateway_failures += records.iter().filter(|r| r.error.is_some()).count();
            if let Some(path) = sink.write(batch_index, stage, &records)? {
                outcome.files.push(path);
            }
            outcome.batches.extend(records);
        }
        sink.finished(batch_index)?;
    }
    let mut events = events.into_inner().unwrap();
    events.sort_by_key(|e| e.started);
    outcome.events = events;
    Ok(outcome)
}

fn run_stage(
    stage: Stage,
    batch_index: usize,
    chunk: &TextChunk,
    cfg: &PipelineConfig,
    gateway: &Gateway,
) -> TripleBatch {
    let profile = gateway.profile();
    let mut req = ChatRequest::new(
        build_stage_prompt(stage, chunk),
        cfg.generation_budget(stage, profile.max_output_tokens),
    )
    .with_sampling(cfg.temperature, cfg.top_p);
    req.template = cfg.chat_template.clone();
    let marker = cfg.answer_start.as_deref().or(profile.answer_start.as_deref());
    let (raw, parsed, error) = match gateway.chat(&req) {
        Ok(raw) => {
            let parsed = parse_stage_output(stage, &raw, marker);
            (raw, parsed, None)
        }
        Err(e) => {
            log::warn!("{} stage {stage}: {e}", chunk.chunk_id);
            (String::new(), ParsedOutput::failed(), Some(e.to_string()))
        }
    };
    TripleBatch {
        stage,
        batch_index,
        chunk_id: chunk.chunk_id.clone(),
        doc_id: chunk.doc_id.clone(),
        seq_no: chunk.seq_no,
        text: chunk.text.clone(),
        metadata: chunk.metadata.clone(),
        raw_output: raw,
        triples: parsed.triples,
        parse_status: parsed.status,
        off_vocabulary: parsed.off_vocabulary,
        error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::MockChat;
    use crate::gateway::GatewayError;

    fn corpus() -> Vec<Document> {
        (0..5)
            .map(|i| Document::new(format!("d{i}"), format!("Alpha Corp{i} hired Beta Person{i}. Beta Person{i} moved to Gamma Town.")))
            .collect()
    }

    #[test]
    fn stages_run_in_order_per_chunk() {
        let gw = Gateway::mock(MockChat::standard());
        let cfg = PipelineConfig {
            batch_size: 2,
            ..Default::default()
        };
        let out = run_extraction(corpus(), &cfg, &gw, &mut MemorySink).unwrap();
        assert_eq!(out.chunks, 5);
        assert_eq!(out.batch_count, 3);
        assert_eq!(out.batches.len(), 15);
        assert!(out.batches.iter().all(|b| b.parse_status == ParseStatus::Ok));
        for chunk in 0..5 {
            let id = format!("d{chunk}#0");
            let ev: Vec<&StageEvent> = out.events.iter().filter(|e| e.chunk_id == id).collect();
            assert_eq!(ev.len(), 3);
            assert!(ev[0].finished <= ev[1].started && ev[1].finished <= ev[2].started);
            assert_eq!(
                ev.iter().map(|e| e.stage).collect::<Vec<_>>(),
                Stage::ALL.to_vec()
            );
        }
    }

    #[test]
    fn empty_corpus() {
        let gw = Gateway::mock(MockChat::standard());
        let out = run_extraction(Vec::new(), &PipelineConfig::default(), &gw, &mut MemorySink).unwrap();
        assert_eq!((out.chunks, out.batch_count, out.batches.len()), (0, 0, 0));
    }

    #[test]
    fn one_malformed_chunk_fails_alone() {
        let chat = MockChat::standard()
            .override_fn("Corp2", |_| "not json at all".to_string())
            .unwrap();
        let gw = Gateway::mock(chat);
        let out = run_extraction(corpus(), &PipelineConfig::default(), &gw, &mut MemorySink).unwrap();
        for b in &out.batches {
            let expect = if b.doc_id == "d2" {
                ParseStatus::Failed
            } else {
                ParseStatus::Ok
            };
            assert_eq!(b.parse_status, expect, "{}", b.chunk_id);
        }
    }

    #[test]
    fn exhausted_gateway_marks_chunks_failed() {
        let chat = crate::gateway::mock::FlakyChat::new(MockChat::standard(), u32::MAX, GatewayError::Timeout);
        let gw = Gateway::mock(chat);
        let out = run_extraction(corpus(), &PipelineConfig::default(), &gw, &mut MemorySink).unwrap();
        assert_eq!(out.gateway_failures, 15);
        assert!(out.batches.iter().all(|b| b.parse_status == ParseStatus::Failed && b.triples.is_empty()));
    }

    #[test]
    fn event_stage_gets_larger_budget() {
        let chat = MockChat::standard();
        let log = chat.log();
        let gw = Gateway::mock(chat);
        let docs = vec![Document::new("d", "Ann Lee met Bob Ray.")];
        run_extraction(docs, &PipelineConfig::default(), &gw, &mut MemorySink).unwrap();
        let budgets: Vec<u32> = log.lock().unwrap().iter().map(|r| r.max_tokens).collect();
        assert_eq!(budgets, [1024, 1024, 2048]);
    }
}
