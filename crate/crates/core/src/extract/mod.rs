//! Corpus to triples: English filtering, chunking, three prompting stages,
//! output parsing and batch files, and assembly into a [`KnowledgeGraph`].
//!
//! [`KnowledgeGraph`]: crate::graph::KnowledgeGraph

pub mod assemble;
pub mod batch_io;
pub mod chunk;
pub mod corpus;
pub mod parse;
pub mod pipeline;
pub mod repair;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Message, Tokenizer};
use crate::prompts;

pub use assemble::{build_graph, AssemblyReport};
pub use batch_io::{load_batches, serialize_batch, BatchLoad, LineError};
pub use chunk::{chunk_document, TextChunk};
pub use corpus::{filter_corpus, read_corpus, DocMetadata, Document};
pub use parse::{parse_stage_output, ParseStatus, ParsedOutput, Triple, VV_RELATIONS};
pub use pipeline::{run_extraction, ExtractionOutcome, StageEvent, TripleBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Entity-entity relations.
    #[serde(rename = "ee")]
    EntityRelation,
    /// Event-entity participation.
    #[serde(rename = "ev")]
    EventEntity,
    /// Event-event relations.
    #[serde(rename = "vv")]
    EventRelation,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::EntityRelation, Stage::EventEntity, Stage::EventRelation];

    /// Short name, also the batch subdirectory.
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::EntityRelation => "ee",
            Stage::EventEntity => "ev",
            Stage::EventRelation => "vv",
        }
    }

    pub fn system_prompt(self) -> &'static str {
        prompts::text(match self {
            Stage::EntityRelation => prompts::ENTITY_RELATION,
            Stage::EventEntity => prompts::EVENT_ENTITY,
            Stage::EventRelation => prompts::EVENT_RELATION,
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// System prompt of the stage's figure text, user message the chunk text.
pub fn build_stage_prompt(stage: Stage, chunk: &TextChunk) -> Vec<Message> {
    vec![
        Message::system(stage.system_prompt()),
        Message::user(chunk.text.clone()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Model context limit in tokens.
    pub max_length: usize,
    /// Token budget reserved for the instruction prompt.
    pub instruction_length: usize,
    /// Chunks per batch.
    pub batch_size: usize,
    /// Generation budget multiplier for the event-relation stage.
    pub alpha: f64,
    /// Overrides the model profile's answer-start marker.
    pub answer_start: Option<String>,
    /// Overrides the model profile's chat template id.
    pub chat_template: Option<String>,
    /// How far back from the budget edge a chunk split may move.
    pub lookback: usize,
    /// Concurrent requests per stage.
    pub in_flight: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_length: 1024,
            instruction_length: 124,
            batch_size: 16,
            alpha: 2.0,
            answer_start: None,
            chat_template: None,
            lookback: 64,
            in_flight: 8,
            temperature: 0.0,
            top_p: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_length <= self.instruction_length {
            return Err(Error::Config(format!(
                "max_length ({}) must exceed instruction_length ({})",
                self.max_length, self.instruction_length
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::Config(format!("alpha must be > 1, got {}", self.alpha)));
        }
        if self.in_flight == 0 {
            return Err(Error::Config("in_flight must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) || !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("temperature or top_p out of range".into()));
        }
        Ok(())
    }

    /// Chunk budget for a given instruction length.
    pub fn chunk_budget(&self, instruction_length: usize) -> usize {
        self.max_length.saturating_sub(instruction_length)
    }

    /// Instruction length actually reserved: the configured value or the
    /// longest stage prompt under `tokenizer`, whichever is larger.
    pub fn effective_instruction_length(&self, tokenizer: &dyn Tokenizer) -> usize {
        Stage::ALL
            .iter()
            .map(|s| tokenizer.count(s.system_prompt()))
            .fold(self.instruction_length, usize::max)
    }

    /// Generation budget per stage; the event-relation stage gets
    /// `alpha * max_length`, capped at `model_cap`.
    pub fn generation_budget(&self, stage: Stage, model_cap: u32) -> u32 {
        let want = match stage {
            Stage::EventRelation => (self.alpha * self.max_length as f64).ceil() as u64,
            _ => self.max_length as u64,
        };
        want.min(model_cap as u64).max(1) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::WhitespaceTokenizer;

    #[test]
    fn budgets() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.chunk_budget(124), 900);
        assert_eq!(cfg.generation_budget(Stage::EventRelation, 4096), 2048);
        assert_eq!(cfg.generation_budget(Stage::EventRelation, 1500), 1500);
        assert_eq!(cfg.generation_budget(Stage::EntityRelation, 4096), 1024);
        let measured = cfg.effective_instruction_length(&WhitespaceTokenizer);
        assert!(measured >= 124);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            PipelineConfig { alpha: 1.0, ..Default::default() },
            PipelineConfig { batch_size: 0, ..Default::default() },
            PipelineConfig { max_length: 100, instruction_length: 100, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn stage_prompts_carry_format_blocks() {
        let chunk = TextChunk::new("d", 0, "Sam plays.".into(), 2, DocMetadata::default());
        let ee = build_stage_prompt(Stage::EntityRelation, &chunk);
        assert!(ee[0].content.contains("\"Head\": \"{a noun}\""));
        assert_eq!(ee[1].content, "Sam plays.");
        let ev = build_stage_prompt(Stage::EventEntity, &chunk);
        assert!(ev[0].content.contains("\"Entity\": [\"{entity 1}\""));
        let vv = build_stage_prompt(Stage::EventRelation, &chunk);
        assert!(vv[0]
            .content
            .contains("before, after, at the same time, because, and as a result"));
    }
}
