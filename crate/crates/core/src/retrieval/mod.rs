//! Query-time retrieval: path search with LLM pruning, personalized
//! PageRank over passages, and a sampled variant for large graphs.

mod large;
mod pagerank;
mod ppr;
mod tog;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::extract::repair::repair_json_list;
use crate::gateway::{ChatRequest, Gateway, GatewayError, Message};
use crate::graph::{KnowledgeGraph, NodeId, NodeKind};
use crate::index::VectorIndex;
use crate::prompts;
use crate::text::fold_key;

pub use large::{aggregate_passages, large_kg_retrieve, rwr_sample, LargeKGConfig};
pub use pagerank::{personalized_pagerank, Adjacency, PageRankParams};
pub use ppr::{
    ppr_retrieve, query_to_edge_scores, query_to_passage_scores, PPRConfig, Personalization,
};
pub use tog::{tog_answer, tog_prune, tog_search, Path, ToGConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tog,
    Ppr,
    Large,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tog" => Ok(Method::Tog),
            "ppr" => Ok(Method::Ppr),
            "large" => Ok(Method::Large),
            _ => Err(Error::Config(format!("unknown retrieval method {s:?}"))),
        }
    }
}

/// One `[head, relation, tail]` fact, as text.
pub type TripleText = [String; 3];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub passages: Vec<String>,
    pub paths: Vec<Vec<TripleText>>,
    /// One per passage, non-increasing.
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RetrievalResult {
    pub(crate) fn empty(diagnostic: impl Into<String>) -> Self {
        RetrievalResult {
            diagnostic: Some(diagnostic.into()),
            ..Default::default()
        }
    }
}

/// A question from a JSON-lines batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    #[serde(default)]
    pub id: Option<String>,
    pub question: String,
}

const MAX_LIST_TOKENS: u32 = 512;

/// Sends `user` under the system template and returns the raw reply.
pub(crate) fn ask(
    gateway: &Gateway,
    template: &str,
    user: String,
    max_tokens: u32,
) -> std::result::Result<String, GatewayError> {
    let req = ChatRequest::new(
        vec![Message::system(prompts::text(template)), Message::user(user)],
        max_tokens,
    );
    gateway.chat(&req)
}

pub(crate) fn string_list(raw: &str) -> Vec<String> {
    repair_json_list(raw)
        .map(|(items, _)| {
            items
                .into_iter()
                .filter_map(|v| match v {
                    Value::String(s) => Some(s.trim().to_string()),
                    _ => None,
                })
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default()
}

/// Entity mentions in `question`, deduplicated case-insensitively.
pub fn question_entities(question: &str, gateway: &Gateway) -> Result<Vec<String>> {
    let raw = ask(
        gateway,
        prompts::QUERY_NER,
        format!("Question: {question}"),
        MAX_LIST_TOKENS,
    )?;
    let mut seen = HashSet::new();
    Ok(string_list(&raw)
        .into_iter()
        .filter(|e| seen.insert(fold_key(e)))
        .collect())
}

/// Graph nodes nearest to each entity, best `k` per entity, merged across
/// entities by best score and cut to `k`. Passage nodes are never returned.
pub fn link_entities(
    entities: &[String],
    g: &KnowledgeGraph,
    node_index: &VectorIndex,
    k: usize,
    gateway: &Gateway,
) -> Result<Vec<(NodeId, f64)>> {
    if entities.is_empty() || k == 0 || node_index.is_empty() {
        return Ok(Vec::new());
    }
    let vecs = gateway.embed(entities)?;
    let mut best: Vec<(NodeId, f64)> = Vec::new();
    for v in &vecs {
        for (hex, score) in node_index.top_k(v, k)? {
            let Some(id) = NodeId::from_hex(&hex).filter(|id| g.contains(*id)) else {
                continue;
            };
            if id.kind() == NodeKind::Passage {
                continue;
            }
            match best.iter_mut().find(|(b, _)| *b == id) {
                Some(slot) => slot.1 = slot.1.max(score),
                None => best.push((id, score)),
            }
        }
    }
    best.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    best.truncate(k);
    Ok(best)
}

/// Sorts `(key, score)` pairs by descending score, ties by ascending key.
pub(crate) fn rank_desc<K: Ord>(items: &mut [(K, f64)]) {
    items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
}
