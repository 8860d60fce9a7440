//! Built-in responders for the mock rule table.
//!
//! They read the prompts this crate assembles and answer with the output
//! shapes the real prompts ask for, using simple surface heuristics (runs
//! of capitalized words are entities, sentences are events). Retrieval
//! prompts put labelled payloads on their own lines (`Question: ...`,
//! `Facts: [...]`, `Paths: [...]`), which is what the parsers below rely on.

use std::str::FromStr;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::ChatRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Entity-relation, event-entity or event-relation JSON, by stage.
    ExtractHeuristic,
    /// Generic phrases for whichever concept prompt was sent.
    ConceptHeuristic,
    NerCapitalized,
    KeepAllFacts,
    /// Keeps the facts whose head or tail is named in the question.
    KeepQuestionFacts,
    KeepAllNodes,
    ScoreNeutral,
    /// 1 + number of hops, capped at 5.
    ScoreByLength,
    AlwaysYes,
    /// "Yes" once some path has at least two hops.
    YesAtTwoHops,
    AnswerFromPaths,
    McqFromPassage,
    /// Picks the option that occurs in the supplied context.
    McqOracle,
    /// Letter chosen by a hash of the prompt.
    McqRandom,
}

impl FromStr for Builtin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "extract-heuristic" => Builtin::ExtractHeuristic,
            "concept-heuristic" => Builtin::ConceptHeuristic,
            "ner-capitalized" => Builtin::NerCapitalized,
            "keep-all-facts" => Builtin::KeepAllFacts,
            "keep-question-facts" => Builtin::KeepQuestionFacts,
            "keep-all-nodes" => Builtin::KeepAllNodes,
            "score-neutral" => Builtin::ScoreNeutral,
            "score-by-length" => Builtin::ScoreByLength,
            "always-yes" => Builtin::AlwaysYes,
            "yes-at-two-hops" => Builtin::YesAtTwoHops,
            "answer-from-paths" => Builtin::AnswerFromPaths,
            "mcq-from-passage" => Builtin::McqFromPassage,
            "mcq-oracle" => Builtin::McqOracle,
            "mcq-random" => Builtin::McqRandom,
            _ => return Err(format!("unknown builtin {s:?}")),
        })
    }
}

impl Builtin {
    pub fn respond(&self, req: &ChatRequest) -> String {
        let system = req.system_text();
        let user = req.user_text();
        match self {
            Builtin::ExtractHeuristic => extract(system, user),
            Builtin::ConceptHeuristic => concepts(system),
            Builtin::NerCapitalized => {
                let q = labelled(user, "Question:").unwrap_or(user);
                Value::from(question_entities(q)).to_string()
            }
            Builtin::KeepAllFacts => labelled(user, "Facts:").unwrap_or("[]").to_string(),
            Builtin::KeepQuestionFacts => keep_question_facts(user),
            Builtin::KeepAllNodes => labelled(user, "Nodes:").unwrap_or("[]").to_string(),
            Builtin::ScoreNeutral => "3".into(),
            Builtin::ScoreByLength => {
                let hops = labelled(user, "Path:")
                    .and_then(|p| serde_json::from_str::<Vec<Value>>(p).ok())
                    .map_or(0, |v| v.len());
                (1 + hops).min(5).to_string()
            }
            Builtin::AlwaysYes => "Yes".into(),
            Builtin::YesAtTwoHops => {
                if paths(user).iter().any(|p| p.len() >= 2) {
                    "Yes".into()
                } else {
                    "No".into()
                }
            }
            Builtin::AnswerFromPaths => answer_from_paths(user),
            Builtin::McqFromPassage => mcq_from_passage(&req.transcript()),
            Builtin::McqOracle => mcq_oracle(&req.transcript()),
            Builtin::McqRandom => letter_by_hash(&req.transcript()).to_string(),
        }
    }
}

/// Rest of the first line starting with `label`.
fn labelled<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

const STOP: &[&str] = &[
    "A", "An", "The", "In", "On", "At", "Of", "He", "She", "It", "They", "We", "I", "His", "Her",
    "Its", "Their", "This", "That", "These", "Those", "When", "After", "Before", "Which", "Who",
    "Whom", "Whose", "Where", "What", "How", "Why", "Did", "Does", "Do", "Is", "Was", "Are",
    "Were", "And", "But", "Then", "There", "Here", "Yes", "No",
];

fn trim_token(t: &str) -> &str {
    t.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')
}

fn ends_clause(t: &str) -> bool {
    t.ends_with([',', ';', ':', '.', '!', '?', ')', '"'])
}

/// Runs of capitalized words, each with the index range of its tokens.
fn entity_runs(sentence: &str) -> Vec<(String, usize, usize)> {
    let toks: Vec<&str> = sentence.split_whitespace().collect();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let w = trim_token(toks[i]);
        let cap = w.chars().next().is_some_and(char::is_uppercase);
        if !cap || STOP.contains(&w) {
            i += 1;
            continue;
        }
        let start = i;
        let mut words = vec![w];
        while !ends_clause(toks[i]) && i + 1 < toks.len() {
            let next = trim_token(toks[i + 1]);
            if !next.chars().next().is_some_and(char::is_uppercase) || STOP.contains(&next) {
                break;
            }
            i += 1;
            words.push(next);
        }
        runs.push((words.join(" "), start, i + 1));
        i += 1;
    }
    runs
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        let boundary = matches!(c, '.' | '!' | '?')
            && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if boundary {
            let s = cur.split_whitespace().collect::<Vec<_>>().join(" ");
            if !s.is_empty() {
                out.push(s);
            }
            cur.clear();
        }
    }
    let s = cur.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
    out
}

fn strip_end(s: &str) -> &str {
    s.trim_end_matches(['.', '!', '?'])
}

fn extract(system: &str, passage: &str) -> String {
    let sents = sentences(passage);
    let mut out = Vec::new();
    if system.contains("\"Entity\": [") {
        for s in &sents {
            let ents: Vec<String> = entity_runs(s).into_iter().map(|r| r.0).collect();
            if !ents.is_empty() {
                out.push(json!({"Event": strip_end(s), "Entity": ents}));
            }
        }
    } else if system.contains("temporal and causal") {
        let events: Vec<&String> = sents.iter().filter(|s| !entity_runs(s).is_empty()).collect();
        for pair in events.windows(2) {
            out.push(json!({
                "Head": strip_end(pair[0]),
                "Relation": "before",
                "Tail": strip_end(pair[1]),
            }));
        }
    } else {
        for s in &sents {
            let runs = entity_runs(s);
            if runs.len() < 2 {
                continue;
            }
            let toks: Vec<&str> = s.split_whitespace().collect();
            let (head, _, head_end) = &runs[0];
            let (tail, tail_start, _) = &runs[1];
            let between: Vec<&str> = toks[*head_end..*tail_start]
                .iter()
                .map(|t| trim_token(t))
                .filter(|t| !t.is_empty())
                .collect();
            let relation = if between.is_empty() {
                "related to".to_string()
            } else {
                between.join(" ")
            };
            out.push(json!({"Head": head, "Relation": relation, "Tail": tail}));
        }
    }
    serde_json::to_string_pretty(&out).unwrap_or_else(|_| "[]".into())
}

fn concepts(system: &str) -> String {
    let (marker, base) = if system.contains("ABSTRACT EVENT") {
        ("EVENT: ", ["occurrence", "activity", "happening"])
    } else if system.contains("ABSTRACT ENTITY") {
        ("ENTITY: ", ["named thing", "entity type", "object"])
    } else {
        ("RELATION: ", ["connection", "association", "link"])
    };
    let element = system
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(marker))
        .unwrap_or("")
        .trim();
    let mut phrases: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    if let Some(last) = element.split_whitespace().last() {
        let last = trim_token(last).to_lowercase();
        if !last.is_empty() && last != element.to_lowercase() && !phrases.contains(&last) {
            phrases.push(last);
        }
    }
    phrases.join(", ")
}

const WH: &[&str] = &["Who", "What", "Where", "Which", "When", "How", "Why", "In"];

fn question_entities(q: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in sentences(q) {
        for (e, _, _) in entity_runs(&s) {
            if !WH.contains(&e.as_str()) && !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

fn keep_question_facts(user: &str) -> String {
    let q = labelled(user, "Question:").unwrap_or("").to_lowercase();
    let facts: Vec<Vec<String>> = labelled(user, "Facts:")
        .and_then(|f| serde_json::from_str(f).ok())
        .unwrap_or_default();
    let kept: Vec<&Vec<String>> = facts
        .iter()
        .filter(|f| {
            f.len() == 3
                && (q.contains(&f[0].to_lowercase()) || q.contains(&f[2].to_lowercase()))
        })
        .collect();
    serde_json::to_string(&kept).unwrap_or_else(|_| "[]".into())
}

fn paths(user: &str) -> Vec<Vec<Vec<String>>> {
    labelled(user, "Paths:")
        .and_then(|p| serde_json::from_str(p).ok())
        .unwrap_or_default()
}

fn answer_from_paths(user: &str) -> String {
    let all = paths(user);
    // the first of the longest paths, i.e. the best ranked one
    let best = all.iter().rev().max_by_key(|p| p.len());
    match best.and_then(|p| p.last()) {
        Some(t) if t.len() == 3 => t[2].clone(),
        _ => "unknown".into(),
    }
}

fn letter_by_hash(text: &str) -> char {
    let d = Sha256::digest(text.as_bytes());
    (b'A' + d[0] % 4) as char
}

const DISTRACTORS: &[&str] = &[
    "Orin Vale",
    "Tessa Marr",
    "Quill Harbor",
    "Dax Moreau",
    "Lyle Brennick",
    "Sable Point",
];

fn mcq_from_passage(transcript: &str) -> String {
    let passage = transcript
        .rsplit_once("Passage:\n")
        .map_or(transcript, |(_, p)| p);
    let lower = passage.to_lowercase();
    let pool: Vec<&str> = DISTRACTORS
        .iter()
        .copied()
        .filter(|d| !lower.contains(&d.to_lowercase()))
        .collect();
    let mut items = Vec::new();
    for s in sentences(passage) {
        if items.len() == 5 || pool.len() < 3 {
            break;
        }
        let runs = entity_runs(&s);
        if runs.len() < 2 {
            continue;
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        let rel: Vec<&str> = toks[runs[0].2..runs[1].1].iter().map(|t| trim_token(t)).collect();
        let question = format!(
            "According to the passage, which option completes the statement: {} {} ___?",
            runs[0].0,
            rel.join(" ")
        );
        let correct = runs[1].0.clone();
        let slot = (letter_by_hash(&question) as u8 - b'A') as usize;
        let mut opts: Vec<String> = pool.iter().take(3).map(|s| s.to_string()).collect();
        opts.insert(slot, correct);
        let labelled: Vec<String> = opts
            .iter()
            .enumerate()
            .map(|(i, o)| format!("{}: {o}", (b'A' + i as u8) as char))
            .collect();
        items.push(json!({
            "question": question,
            "options": labelled,
            "answer": ((b'A' + slot as u8) as char).to_string(),
        }));
    }
    serde_json::to_string_pretty(&items).unwrap_or_else(|_| "[]".into())
}

fn mcq_oracle(transcript: &str) -> String {
    let context = transcript
        .split_once("Given the contexts or evidences:\n")
        .and_then(|(_, rest)| rest.split_once("\n\nHere is a multiple-choice question"))
        .map_or("", |(c, _)| c)
        .to_lowercase();
    for label in ['A', 'B', 'C', 'D'] {
        let prefix = format!("{label}. ");
        let opt = transcript.lines().find_map(|l| l.strip_prefix(prefix.as_str()));
        if let Some(opt) = opt {
            let opt = opt.trim().to_lowercase();
            if !opt.is_empty() && context.contains(&opt) {
                return label.to_string();
            }
        }
    }
    letter_by_hash(transcript).to_string()
}
