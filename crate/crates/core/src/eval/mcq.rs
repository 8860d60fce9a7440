use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::MetricReport;
use crate::error::{Error, Result};
use crate::extract::repair::repair_json_list;
use crate::gateway::{ChatRequest, Gateway, Message};
use crate::graph::{EdgeKind, KnowledgeGraph, Provenance};
use crate::prompts;

const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];
const GENERATE_TOKENS: u32 = 2048;
const ANSWER_TOKENS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub question: String,
    /// Option texts for A to D, without their labels.
    pub options: [String; 4],
    pub answer: char,
    pub source: String,
}

fn strip_label(option: &str, letter: char) -> String {
    let o = option.trim();
    let mut chars = o.chars();
    if chars.next().map(|c| c.to_ascii_uppercase()) == Some(letter) {
        let rest = chars.as_str();
        if let Some(r) = rest.strip_prefix([':', '.', ')']) {
            return r.trim().to_string();
        }
    }
    o.to_string()
}

impl McqItem {
    /// Reads one generated entry; `None` unless it has a question, exactly
    /// four options and an answer letter among A to D.
    pub fn from_json(v: &Value, source: &str) -> Option<Self> {
        let question = v.get("question")?.as_str()?.trim().to_string();
        let opts = v.get("options")?.as_array()?;
        if question.is_empty() || opts.len() != 4 {
            return None;
        }
        let mut options: [String; 4] = Default::default();
        for (i, o) in opts.iter().enumerate() {
            options[i] = strip_label(o.as_str()?, LETTERS[i]);
        }
        let answer = parse_letter(v.get("answer")?.as_str()?)?;
        Some(McqItem {
            question,
            options,
            answer,
            source: source.to_string(),
        })
    }
}

/// `A`..`D` alone, optionally followed by `.`, `:` or `)`.
pub fn parse_letter(raw: &str) -> Option<char> {
    let t = raw.trim();
    let t = t.strip_suffix(['.', ':', ')']).unwrap_or(t).trim();
    let mut chars = t.chars();
    let c = chars.next()?.to_ascii_uppercase();
    (chars.next().is_none() && LETTERS.contains(&c)).then_some(c)
}

/// Items parsed from a generation reply, plus how many entries were dropped.
pub fn parse_mcq_items(raw: &str, source: &str) -> (Vec<McqItem>, usize) {
    let Some((entries, _)) = repair_json_list(raw) else {
        log::warn!("unparseable MCQ output for {source}");
        return (Vec::new(), 1);
    };
    let mut items = Vec::new();
    let mut dropped = 0;
    for e in &entries {
        match McqItem::from_json(e, source) {
            Some(item) => items.push(item),
            None => {
                log::warn!("dropping malformed MCQ entry for {source}");
                dropped += 1;
            }
        }
    }
    (items, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "none")]
    NoContext,
    #[serde(rename = "passage")]
    Passage,
    #[serde(rename = "entity")]
    Entity,
    #[serde(rename = "event")]
    Event,
    #[serde(rename = "event+entity")]
    EventEntity,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::NoContext,
        Condition::Passage,
        Condition::Entity,
        Condition::Event,
        Condition::EventEntity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NoContext => "none",
            Condition::Passage => "passage",
            Condition::Entity => "entity",
            Condition::Event => "event",
            Condition::EventEntity => "event+entity",
        }
    }

    fn keeps(self, kind: EdgeKind) -> bool {
        match self {
            Condition::Entity => kind == EdgeKind::EntityEntity,
            Condition::Event => matches!(kind, EdgeKind::EventEntity | EdgeKind::EventEvent),
            Condition::EventEntity => kind.is_fact(),
            Condition::NoContext | Condition::Passage => false,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown MCQ condition {s:?}")))
    }
}

/// Context shown with questions about `passage_id`: nothing, the passage
/// text, or the passage's extracted triples of the selected kinds, one
/// "head relation tail" per line.
pub fn condition_context(g: &KnowledgeGraph, passage_id: &str, condition: Condition) -> String {
    match condition {
        Condition::NoContext => String::new(),
        Condition::Passage => g.passage_text(passage_id).unwrap_or_default().to_string(),
        _ => {
            let prov = Provenance::passage(passage_id);
            let text = |id| g.node(id).map_or("", |n| n.text.as_str());
            g.edges()
                .iter()
                .filter(|e| condition.keeps(e.kind) && e.provenance == prov)
                .map(|e| format!("{} {} {}", text(e.head), e.relation, text(e.tail)))
                .collect::<Vec<_>>()
                .join("\n")
        }
    }
}

pub fn build_generation_prompt(passage: &str) -> Vec<Message> {
    vec![Message::system(prompts::fill(prompts::MCQ_GENERATE, &[("{passage}", passage)]))]
}

pub fn build_answer_prompt(item: &McqItem, context: &str) -> Vec<Message> {
    let [o0, o1, o2, o3] = &item.options;
    vec![Message::system(prompts::fill(
        prompts::MCQ_ANSWER,
        &[
            ("{contexts}", context),
            ("{question}", &item.question),
            ("{options_0}", o0),
            ("{options_1}", o1),
            ("{options_2}", o2),
            ("{options_3}", o3),
        ],
    ))]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Generated {
    pub items: Vec<McqItem>,
    pub dropped: usize,
}

/// Questions for each `(passage_id, text)`, in passage order.
pub fn generate_mcqs(passages: &[(String, String)], gateway: &Gateway) -> Result<Generated> {
    let replies: Vec<Result<String>> = passages
        .par_iter()
        .map(|(_, text)| {
            let req = ChatRequest::new(build_generation_prompt(text), GENERATE_TOKENS);
            gateway.chat(&req).map_err(Error::from)
        })
        .collect();
    let mut out = Generated::default();
    for ((id, _), reply) in passages.iter().zip(replies) {
        let (items, dropped) = parse_mcq_items(&reply?, id);
        out.items.extend(items);
        out.dropped += dropped;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McqScore {
    pub items: usize,
    pub correct: usize,
    /// Replies that were not a single letter; scored wrong.
    pub non_letter: usize,
}

impl McqScore {
    pub fn accuracy(&self) -> f64 {
        if self.items == 0 {
            0.0
        } else {
            self.correct as f64 / self.items as f64
        }
    }
}

pub fn answer_mcqs(
    items: &[McqItem],
    g: &KnowledgeGraph,
    gateway: &Gateway,
    condition: Condition,
) -> Result<McqScore> {
    let replies: Vec<Result<Option<char>>> = items
        .par_iter()
        .map(|item| {
            let ctx = condition_context(g, &item.source, condition);
            let req = ChatRequest::new(build_answer_prompt(item, &ctx), ANSWER_TOKENS);
            Ok(parse_letter(&gateway.chat(&req)?))
        })
        .collect();
    let mut score = McqScore {
        items: items.len(),
        ..Default::default()
    };
    for (item, reply) in items.iter().zip(replies) {
        match reply? {
            Some(c) if c == item.answer => score.correct += 1,
            Some(_) => {}
            None => score.non_letter += 1,
        }
    }
    Ok(score)
}

/// Generates questions from each passage, then answers them under
/// `condition`.
pub fn mcq_protocol(
    passages: &[(String, String)],
    g: &KnowledgeGraph,
    gateway: &Gateway,
    condition: Condition,
) -> Result<MetricReport> {
    let generated = generate_mcqs(passages, gateway)?;
    let score = answer_mcqs(&generated.items, g, gateway, condition)?;
    let mut report = MetricReport::new(format!("mcq:{condition}"));
    report.metric("accuracy", score.accuracy());
    report.count("items", score.items as u64);
    report.count("correct", score.correct as u64);
    report.count("non_letter", score.non_letter as u64);
    report.count("dropped", generated.dropped as u64);
    Ok(report)
}
