//! Concept induction for events, entities and relations.

mod context;
mod csv_io;
mod induce;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::Message;
use crate::prompts;
use crate::text::fold_key;

pub use context::sample_entity_context;
pub use csv_io::{read_concept_csv, write_concept_csv};
pub use induce::{induce_schema, plan_batches, ElementBatch, InductionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Event,
    Entity,
    Relation,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [ElementKind::Event, ElementKind::Entity, ElementKind::Relation];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Event => "event",
            ElementKind::Entity => "entity",
            ElementKind::Relation => "relation",
        }
    }

    fn template(self) -> &'static str {
        match self {
            ElementKind::Event => prompts::CONCEPT_EVENT,
            ElementKind::Entity => prompts::CONCEPT_ENTITY,
            ElementKind::Relation => prompts::CONCEPT_RELATION,
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ElementKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown element kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub element: String,
    pub kind: ElementKind,
    pub phrases: Vec<String>,
    /// Neighbor context shown in the prompt; entities only.
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InductionConfig {
    /// Elements per batch.
    pub batch_size: usize,
    /// Neighbors sampled into an entity's context.
    pub context_neighbors: usize,
    /// Prompt length cap in tokens; context is trimmed to fit.
    pub max_prompt_tokens: usize,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub slices: usize,
    pub slice: usize,
    /// Process only this many randomly chosen batches of the slice.
    pub sample_batches: Option<usize>,
    pub seed: u64,
    pub in_flight: usize,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            batch_size: 5,
            context_neighbors: 2,
            max_prompt_tokens: 1024,
            max_new_tokens: 128,
            temperature: 0.7,
            top_p: 0.9,
            slices: 1,
            slice: 0,
            sample_batches: None,
            seed: 0,
            in_flight: 8,
        }
    }
}

impl InductionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("induction batch_size must be >= 1".into()));
        }
        if self.slices == 0 || self.slice >= self.slices {
            return Err(Error::Config(format!(
                "slice {} is outside 0..{}",
                self.slice, self.slices
            )));
        }
        if !(self.temperature >= 0.0) || !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("temperature must be >= 0 and top_p in (0, 1]".into()));
        }
        if self.in_flight == 0 || self.max_new_tokens == 0 {
            return Err(Error::Config("in_flight and max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// The concept prompt for one element, as a single system message.
pub fn build_concept_prompt(kind: ElementKind, element: &str, context: &str) -> Vec<Message> {
    let text = match kind {
        ElementKind::Event => prompts::fill(kind.template(), &[("[EVENT]", element)]),
        ElementKind::Entity => prompts::fill(
            kind.template(),
            &[("[ENTITY]", element), ("[CONTEXT]", context)],
        ),
        ElementKind::Relation => prompts::fill(kind.template(), &[("[RELATION]", element)]),
    };
    vec![Message::system(text)]
}

/// Comma-separated phrases, trimmed, without empties, case-folded
/// duplicates, phrases longer than two words, or the element itself.
pub fn parse_phrases(raw: &str, element: &str) -> Vec<String> {
    let answer = raw
        .rsplit_once("Your answer:")
        .map_or(raw, |(_, rest)| rest);
    let element_key = fold_key(element);
    let mut seen = HashSet::new();
    answer
        .split([',', '\n'])
        .map(|p| {
            p.trim()
                .trim_end_matches('.')
                .trim_matches(|c: char| c == '"' || c == '\'')
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
        })
        .filter(|p| {
            let n = p.split(' ').count();
            !p.is_empty() && n <= 2 && fold_key(p) != element_key && seen.insert(fold_key(p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrase_parsing() {
        assert_eq!(
            parse_phrases("retreat, relaxation, escape, nature, solitude", "x").len(),
            5
        );
        assert_eq!(parse_phrases("a, a, A", "x"), ["a"]);
        assert!(parse_phrases("totally not a short phrase here", "x").is_empty());
        assert_eq!(parse_phrases("Soul, movie,  film ", "soul"), ["movie", "film"]);
    }

    #[test]
    fn prompts_fill_slots() {
        let p = build_concept_prompt(ElementKind::Event, "Sam playing with his dog", "");
        assert!(p[0].content.contains("relaxing event, petting, playing, bonding, friendship"));
        assert!(p[0].content.ends_with("EVENT: Sam playing with his dog\nYour answer:"));
        let p = build_concept_prompt(ElementKind::Entity, "Soul", "premiered BFI London Film Festival");
        assert!(p[0].content.contains("Your answer: movie, film"));
        assert!(p[0]
            .content
            .ends_with("ENTITY: Soul\nCONTEXT: premiered BFI London Film Festival\nYour answer:"));
        let p = build_concept_prompt(ElementKind::Relation, "participated in", "");
        assert!(p[0].content.contains("become part of, attend, take part in"));
    }

    #[test]
    fn config_bounds() {
        InductionConfig::default().validate().unwrap();
        let bad = InductionConfig {
            slices: 2,
            slice: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
