use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::repair::{repair_json_list, RepairOutcome};
use super::Stage;
use crate::text::collapse_whitespace;

/// Relation vocabulary the event-relation prompt asks for.
pub const VV_RELATIONS: [&str; 5] = ["before", "after", "at the same time", "because", "as a result"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Triple {
    Relation {
        head: String,
        relation: String,
        tail: String,
    },
    Participation {
        event: String,
        entities: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOutput {
    pub triples: Vec<Triple>,
    pub status: ParseStatus,
    /// Event-relation triples whose relation is outside [`VV_RELATIONS`].
    pub off_vocabulary: usize,
}

impl ParsedOutput {
    pub fn failed() -> Self {
        ParsedOutput {
            triples: Vec::new(),
            status: ParseStatus::Failed,
            off_vocabulary: 0,
        }
    }
}

/// Text after the last `marker`, or all of `raw` when the marker is absent.
pub fn isolate_answer<'a>(raw: &'a str, marker: Option<&str>) -> &'a str {
    match marker.filter(|m| !m.is_empty()) {
        Some(m) => raw.rfind(m).map_or(raw, |i| &raw[i + m.len()..]),
        None => raw,
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Option<&'a Value> {
    obj.get(name).or_else(|| {
        obj.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(name))
            .map(|(_, v)| v)
    })
}

fn text_of(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => collapse_whitespace(s),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    (!s.is_empty()).then_some(s)
}

fn relation_triple(item: &Value) -> Option<Triple> {
    let obj = item.as_object()?;
    Some(Triple::Relation {
        head: text_of(field(obj, "Head")?)?,
        relation: text_of(field(obj, "Relation")?)?,
        tail: text_of(field(obj, "Tail")?)?,
    })
}

fn participation(item: &Value) -> Option<Triple> {
    let obj = item.as_object()?;
    let event = text_of(field(obj, "Event")?)?;
    let entities: Vec<String> = match field(obj, "Entity")? {
        Value::Array(items) => items.iter().filter_map(text_of).collect(),
        other => text_of(other).into_iter().collect(),
    };
    let mut seen = std::collections::HashSet::new();
    let entities: Vec<String> = entities
        .into_iter()
        .filter(|e| e != "..." && seen.insert(e.to_lowercase()))
        .collect();
    (!entities.is_empty()).then_some(Triple::Participation { event, entities })
}

/// Parses one stage's model output. Never fails: unusable output yields an
/// empty list with status `failed`.
///
/// Entries missing the stage's keys are dropped, which marks the output
/// `repaired`; a non-empty list with no usable entry is `failed`.
pub fn parse_stage_output(stage: Stage, raw: &str, answer_start: Option<&str>) -> ParsedOutput {
    let answer = isolate_answer(raw, answer_start);
    let Some((items, outcome)) = repair_json_list(answer) else {
        return ParsedOutput::failed();
    };
    let convert = match stage {
        Stage::EventEntity => participation,
        _ => relation_triple,
    };
    let triples: Vec<Triple> = items.iter().filter_map(convert).collect();
    if !items.is_empty() && triples.is_empty() {
        return ParsedOutput::failed();
    }
    let status = if outcome == RepairOutcome::Repaired || triples.len() < items.len() {
        ParseStatus::Repaired
    } else {
        ParseStatus::Ok
    };
    let off_vocabulary = if stage == Stage::EventRelation {
        triples
            .iter()
            .filter(|t| match t {
                Triple::Relation { relation, .. } => {
                    !VV_RELATIONS.contains(&relation.to_lowercase().as_str())
                }
                Triple::Participation { .. } => false,
            })
            .count()
    } else {
        0
    };
    ParsedOutput {
        triples,
        status,
        off_vocabulary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_comma_is_repaired() {
        let p = parse_stage_output(
            Stage::EntityRelation,
            r#"[{"Head":"a","Relation":"r","Tail":"b"},]"#,
            None,
        );
        assert_eq!(p.status, ParseStatus::Repaired);
        assert_eq!(
            p.triples,
            [Triple::Relation {
                head: "a".into(),
                relation: "r".into(),
                tail: "b".into()
            }]
        );
    }

    #[test]
    fn empty_list_and_prose() {
        let p = parse_stage_output(Stage::EntityRelation, "I think the answer is: []", None);
        assert_eq!((p.triples.len(), p.status), (0, ParseStatus::Ok));
        let p = parse_stage_output(Stage::EntityRelation, "no idea, sorry", None);
        assert_eq!((p.triples.len(), p.status), (0, ParseStatus::Failed));
    }

    #[test]
    fn answer_marker_takes_last_occurrence() {
        let raw = "<A>[1]<A>[{\"Head\":\"x\",\"Relation\":\"r\",\"Tail\":\"y\"}]";
        let p = parse_stage_output(Stage::EntityRelation, raw, Some("<A>"));
        assert_eq!((p.triples.len(), p.status), (1, ParseStatus::Ok));
        assert_eq!(isolate_answer("abc", Some("<A>")), "abc");
    }

    #[test]
    fn participation_shape() {
        let raw = r#"[{"Event":"Sam plays","Entity":["Sam","Sam","dog"]},{"Event":"x","Entity":"Rex"}]"#;
        let p = parse_stage_output(Stage::EventEntity, raw, None);
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(
            p.triples[0],
            Triple::Participation {
                event: "Sam plays".into(),
                entities: vec!["Sam".into(), "dog".into()]
            }
        );
        assert_eq!(p.triples.len(), 2);
    }

    #[test]
    fn wrong_keys_fail_or_repair() {
        let p = parse_stage_output(Stage::EventEntity, r#"[{"Head":"a","Relation":"r","Tail":"b"}]"#, None);
        assert_eq!(p.status, ParseStatus::Failed);
        let p = parse_stage_output(
            Stage::EntityRelation,
            r#"[{"Head":"a","Relation":"r","Tail":"b"},{"Head":""}]"#,
            None,
        );
        assert_eq!((p.triples.len(), p.status), (1, ParseStatus::Repaired));
    }

    #[test]
    fn vocabulary_counter() {
        let raw = r#"[{"Head":"a","Relation":"before","Tail":"b"},{"Head":"a","Relation":"causes","Tail":"b"}]"#;
        let p = parse_stage_output(Stage::EventRelation, raw, None);
        assert_eq!(p.off_vocabulary, 1);
    }
}
