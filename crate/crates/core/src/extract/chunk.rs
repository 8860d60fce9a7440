use serde::{Deserialize, Serialize};

use super::corpus::{DocMetadata, Document};
use crate::gateway::Tokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub seq_no: usize,
    pub text: String,
    pub token_count: usize,
    pub metadata: DocMetadata,
}

impl TextChunk {
    pub fn new(
        doc_id: &str,
        seq_no: usize,
        text: String,
        token_count: usize,
        metadata: DocMetadata,
    ) -> Self {
        TextChunk {
            chunk_id: format!("{doc_id}#{seq_no}"),
            doc_id: doc_id.to_string(),
            seq_no,
            text,
            token_count,
            metadata,
        }
    }
}

fn ends_sentence(token: &str) -> bool {
    let t = token.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}']);
    t.ends_with(['.', '!', '?'])
}

/// Splits `doc` into chunks of at most `budget` tokens.
///
/// Greedy: each chunk takes as many tokens as fit, then backs off to the
/// last paragraph break within `lookback` tokens of the cut, or failing that
/// the last sentence end, or failing both cuts at the budget.
pub fn chunk_document(
    doc: &Document,
    budget: usize,
    lookback: usize,
    tokenizer: &dyn Tokenizer,
) -> Vec<TextChunk> {
    assert!(budget > 0, "chunk budget must be positive");
    let text = doc.text.as_str();
    let spans = tokenizer.spans(text);
    let n = spans.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = (start + budget).min(n);
        if end < n {
            let floor = end.saturating_sub(lookback).max(start + 1);
            let gap = |j: usize| &text[spans[j - 1].end..spans[j].start];
            let paragraph = (floor..=end).rev().find(|&j| gap(j).contains("\n\n"));
            let sentence = || {
                (floor..=end)
                    .rev()
                    .find(|&j| ends_sentence(&text[spans[j - 1].clone()]))
            };
            if let Some(j) = paragraph.or_else(sentence) {
                end = j;
            }
        }
        let body = text[spans[start].start..spans[end - 1].end].to_string();
        chunks.push(TextChunk::new(
            &doc.id,
            chunks.len(),
            body,
            end - start,
            doc.metadata.clone(),
        ));
        start = end;
    }
    chunks
}
