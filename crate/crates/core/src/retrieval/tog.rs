use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ask, link_entities, question_entities, RetrievalResult, TripleText};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::graph::{EdgeKind, KnowledgeGraph, NodeId};
use crate::index::VectorIndex;
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToGConfig {
    /// Paths kept after each pruning round.
    pub top_n: usize,
    pub max_depth: usize,
    /// Initial nodes taken from entity linking.
    pub initial_nodes: usize,
    pub max_answer_tokens: u32,
}

impl Default for ToGConfig {
    fn default() -> Self {
        ToGConfig {
            top_n: 3,
            max_depth: 3,
            initial_nodes: 3,
            max_answer_tokens: 256,
        }
    }
}

impl ToGConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 || self.initial_nodes == 0 {
            return Err(Error::Config("top_n and initial_nodes must be >= 1".into()));
        }
        Ok(())
    }
}

/// A walk through the graph: `nodes[i]` and `nodes[i + 1]` are joined by
/// the edge at position `hops[i]`, traversed in either direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub hops: Vec<usize>,
}

impl Path {
    pub fn start(node: NodeId) -> Self {
        Path {
            nodes: vec![node],
            hops: Vec::new(),
        }
    }

    pub fn last(&self) -> NodeId {
        *self.nodes.last().expect("paths are never empty")
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    fn extended(&self, edge: usize, node: NodeId) -> Self {
        let mut p = self.clone();
        p.hops.push(edge);
        p.nodes.push(node);
        p
    }

    /// Hop facts in their stored orientation.
    pub fn triples(&self, g: &KnowledgeGraph) -> Vec<TripleText> {
        let text = |id| g.node(id).map_or(String::new(), |n| n.text.clone());
        self.hops
            .iter()
            .map(|&e| {
                let e = &g.edges()[e];
                [text(e.head), e.relation.clone(), text(e.tail)]
            })
            .collect()
    }
}

fn walkable(kind: EdgeKind) -> bool {
    kind.is_fact() || kind == EdgeKind::Conceptualization
}

/// Extends each path by one hop to every node it has not visited, along
/// outgoing edges first, then incoming. Paths with nowhere to go are kept
/// as they are.
pub fn tog_search(g: &KnowledgeGraph, paths: &[Path]) -> Vec<Path> {
    let mut out = Vec::new();
    for path in paths {
        let Some(pos) = g.position(path.last()) else {
            out.push(path.clone());
            continue;
        };
        let mut reached: Vec<NodeId> = Vec::new();
        let mut grew = false;
        let forward = g.out_edges(pos).iter().map(|&e| (e, g.edges()[e].tail));
        let backward = g.in_edges(pos).iter().map(|&e| (e, g.edges()[e].head));
        for (e, next) in forward.chain(backward) {
            if !walkable(g.edges()[e].kind) || path.nodes.contains(&next) || reached.contains(&next) {
                continue;
            }
            reached.push(next);
            out.push(path.extended(e, next));
            grew = true;
        }
        if !grew {
            out.push(path.clone());
        }
    }
    out
}

fn path_json(triples: &[TripleText]) -> Value {
    Value::from(
        triples
            .iter()
            .map(|t| Value::from(t.to_vec()))
            .collect::<Vec<_>>(),
    )
}

fn paths_json(g: &KnowledgeGraph, paths: &[Path]) -> Value {
    Value::from(
        paths
            .iter()
            .map(|p| path_json(&p.triples(g)))
            .collect::<Vec<_>>(),
    )
}

/// First digit 1-5 in a reply; anything else scores 1.
fn parse_score(raw: &str) -> u8 {
    raw.chars()
        .find_map(|c| c.to_digit(10))
        .filter(|d| (1..=5).contains(d))
        .map_or(1, |d| d as u8)
}

fn score_paths(question: &str, g: &KnowledgeGraph, paths: &[Path], gateway: &Gateway) -> Vec<u8> {
    paths
        .par_iter()
        .map(|p| {
            let user = format!("Question: {question}\nPath: {}", path_json(&p.triples(g)));
            match ask(gateway, prompts::PATH_SCORE, user, 8) {
                Ok(raw) => parse_score(&raw),
                Err(e) => {
                    log::warn!("path scoring failed: {e}");
                    1
                }
            }
        })
        .collect()
}

fn prune_scored(
    question: &str,
    g: &KnowledgeGraph,
    paths: Vec<Path>,
    n: usize,
    gateway: &Gateway,
) -> Vec<(Path, u8)> {
    let scores = score_paths(question, g, &paths, gateway);
    let mut scored: Vec<(Path, u8)> = paths.into_iter().zip(scores).collect();
    // stable: equal scores keep input order
    scored.sort_by(|a, b| b.1.cmp(&a.1));
    scored.truncate(n);
    scored
}

/// Keeps the `n` paths the model rates most relevant (1 to 5).
pub fn tog_prune(
    question: &str,
    g: &KnowledgeGraph,
    paths: Vec<Path>,
    n: usize,
    gateway: &Gateway,
) -> Vec<Path> {
    prune_scored(question, g, paths, n, gateway)
        .into_iter()
        .map(|(p, _)| p)
        .collect()
}

fn sufficient(question: &str, g: &KnowledgeGraph, paths: &[Path], gateway: &Gateway) -> Result<bool> {
    let user = format!("Question: {question}\nPaths: {}", paths_json(g, paths));
    let raw = ask(gateway, prompts::SUFFICIENCY, user, 8)?;
    Ok(raw.trim_start().to_ascii_lowercase().starts_with("yes"))
}

/// Path search from the question's entities, followed by answer
/// generation from the surviving paths.
///
/// The initial paths are checked for sufficiency first when they carry any
/// facts, then each of up to `max_depth` rounds searches, prunes and checks
/// again, so the model is asked at most `max_depth + 1` times.
pub fn tog_answer(
    question: &str,
    g: &KnowledgeGraph,
    node_index: &VectorIndex,
    cfg: &ToGConfig,
    gateway: &Gateway,
) -> Result<RetrievalResult> {
    cfg.validate()?;
    let entities = question_entities(question, gateway)?;
    if entities.is_empty() {
        return Ok(RetrievalResult::empty("no entities recognized in the question"));
    }
    let start = link_entities(&entities, g, node_index, cfg.initial_nodes, gateway)?;
    if start.is_empty() {
        return Ok(RetrievalResult::empty("no graph node matches the question entities"));
    }
    let mut paths: Vec<Path> = start.iter().map(|(id, _)| Path::start(*id)).collect();
    let mut scores: Vec<u8> = vec![0; paths.len()];
    let mut done = paths.iter().any(|p| !p.is_empty()) && sufficient(question, g, &paths, gateway)?;
    for _ in 0..cfg.max_depth {
        if done {
            break;
        }
        let grown = tog_search(g, &paths);
        if grown == paths {
            break;
        }
        let scored = prune_scored(question, g, grown, cfg.top_n, gateway);
        (paths, scores) = scored.into_iter().unzip();
        done = sufficient(question, g, &paths, gateway)?;
    }
    let user = format!("Question: {question}\nPaths: {}", paths_json(g, &paths));
    let answer = ask(gateway, prompts::ANSWER, user, cfg.max_answer_tokens)?;

    let mut passages: Vec<String> = Vec::new();
    let mut passage_scores: Vec<f64> = Vec::new();
    for (path, score) in paths.iter().zip(&scores) {
        for id in &path.nodes {
            for r in g.node(*id).map(|n| n.source_refs.as_slice()).unwrap_or_default() {
                if !passages.contains(r) {
                    passages.push(r.clone());
                    passage_scores.push(f64::from(*score));
                }
            }
        }
    }
    Ok(RetrievalResult {
        answer: Some(answer.trim().to_string()),
        passages,
        paths: paths.iter().map(|p| p.triples(g)).collect(),
        scores: passage_scores,
        diagnostic: None,
    })
}
