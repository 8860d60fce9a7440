use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::large::aggregate_passages;
use super::pagerank::{personalized_pagerank, Adjacency, PageRankParams};
use super::{ask, link_entities, question_entities, rank_desc, RetrievalResult};
use crate::error::{Error, Result};
use crate::extract::repair::repair_json_list;
use crate::gateway::{EmbeddingVector, Gateway};
use crate::graph::{KnowledgeGraph, NodeId};
use crate::index::{parse_edge_key, GraphIndexes, VectorIndex};
use crate::prompts;
use crate::text::fold_key;

/// Where the node half of the personalization comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Personalization {
    /// Similar fact edges, filtered by the model, credit their endpoints.
    #[default]
    Edges,
    /// Question entities linked to their nearest node, weighted uniformly.
    Ner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPRConfig {
    pub top_n_edges: usize,
    /// Multiplier on passage similarities before they join the
    /// personalization.
    pub weight_adjust: f64,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub top_k_passages: usize,
    pub personalization: Personalization,
}

impl Default for PPRConfig {
    fn default() -> Self {
        PPRConfig {
            top_n_edges: 30,
            weight_adjust: 0.9,
            damping: 0.9,
            tolerance: 1e-12,
            max_iterations: 1000,
            top_k_passages: 5,
            personalization: Personalization::Edges,
        }
    }
}

impl PPRConfig {
    pub fn pagerank(&self) -> PageRankParams {
        PageRankParams {
            damping: self.damping,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pagerank().validate()?;
        if !(self.weight_adjust >= 0.0) || !self.weight_adjust.is_finite() {
            return Err(Error::Config("weight_adjust must be finite and >= 0".into()));
        }
        Ok(())
    }
}

const FILTER_TOKENS: u32 = 2048;

fn triple_json(g: &KnowledgeGraph, pos: usize) -> Value {
    let e = &g.edges()[pos];
    let text = |id| g.node(id).map_or(String::new(), |n| n.text.clone());
    Value::from(vec![text(e.head), e.relation.clone(), text(e.tail)])
}

fn triple_key(parts: &[String]) -> Option<(String, String, String)> {
    match parts {
        [h, r, t] => Some((fold_key(h), fold_key(r), fold_key(t))),
        _ => None,
    }
}

/// Node weights from the fact edges most similar to the question.
///
/// The best `top_n_edges` edges go through the model filter; facts it keeps
/// are matched back to candidate edges case-insensitively. Each kept edge
/// adds its (non-negative) similarity to both endpoints, or 1 each when all
/// kept similarities are zero, and the sums are normalized to 1.
pub fn query_to_edge_scores(
    question: &str,
    query: &EmbeddingVector,
    g: &KnowledgeGraph,
    edge_index: &VectorIndex,
    cfg: &PPRConfig,
    gateway: &Gateway,
) -> Result<BTreeMap<NodeId, f64>> {
    let candidates: Vec<(usize, f64)> = edge_index
        .top_k(query, cfg.top_n_edges)?
        .into_iter()
        .filter_map(|(key, s)| parse_edge_key(&key).map(|p| (p, s)))
        .filter(|(p, _)| *p < g.edge_count() && g.edges()[*p].kind.is_fact())
        .collect();
    if candidates.is_empty() {
        return Ok(BTreeMap::new());
    }
    let facts: Vec<Value> = candidates.iter().map(|(p, _)| triple_json(g, *p)).collect();
    let raw = ask(
        gateway,
        prompts::EDGE_FILTER,
        format!("Question: {question}\nFacts: {}", Value::from(facts)),
        FILTER_TOKENS,
    )?;
    let kept: Vec<(String, String, String)> = repair_json_list(&raw)
        .map(|(items, _)| items)
        .unwrap_or_default()
        .into_iter()
        .filter_map(|v| serde_json::from_value::<Vec<String>>(v).ok())
        .filter_map(|parts| triple_key(&parts))
        .collect();
    let mapped: Vec<(usize, f64)> = candidates
        .into_iter()
        .filter(|(p, _)| {
            let e = &g.edges()[*p];
            let key = (
                fold_key(g.node(e.head).map_or("", |n| &n.text)),
                fold_key(&e.relation),
                fold_key(g.node(e.tail).map_or("", |n| &n.text)),
            );
            kept.contains(&key)
        })
        .collect();
    let all_zero = mapped.iter().all(|(_, s)| *s <= 0.0);
    let mut scores: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (p, s) in mapped {
        let w = if all_zero { 1.0 } else { s.max(0.0) };
        let e = &g.edges()[p];
        *scores.entry(e.head).or_default() += w;
        *scores.entry(e.tail).or_default() += w;
    }
    let total: f64 = scores.values().sum();
    if total > 0.0 {
        scores.values_mut().for_each(|v| *v /= total);
    } else {
        scores.clear();
    }
    Ok(scores)
}

/// Similarity of every passage to the query, times `weight_adjust`.
pub fn query_to_passage_scores(
    query: &EmbeddingVector,
    passage_index: &VectorIndex,
    weight_adjust: f64,
) -> Result<BTreeMap<String, f64>> {
    let sims = passage_index.scores(query)?;
    Ok(passage_index
        .ids()
        .iter()
        .cloned()
        .zip(sims.into_iter().map(|s| s * weight_adjust))
        .collect())
}

/// Node weights from question entities, one nearest node per entity.
fn ner_node_scores(
    question: &str,
    g: &KnowledgeGraph,
    node_index: &VectorIndex,
    gateway: &Gateway,
) -> Result<BTreeMap<NodeId, f64>> {
    let entities = question_entities(question, gateway)?;
    let mut nodes = BTreeMap::new();
    for e in &entities {
        if let Some((id, _)) = link_entities(std::slice::from_ref(e), g, node_index, 1, gateway)?
            .into_iter()
            .next()
        {
            nodes.insert(id, 1.0);
        }
    }
    let n = nodes.len() as f64;
    nodes.values_mut().for_each(|v| *v /= n);
    Ok(nodes)
}

fn take_top(mut ranked: Vec<(String, f64)>, k: usize) -> RetrievalResult {
    rank_desc(&mut ranked);
    ranked.truncate(k);
    let (passages, scores) = ranked.into_iter().unzip();
    RetrievalResult {
        passages,
        scores,
        ..Default::default()
    }
}

/// Passage ranking by personalized PageRank seeded from both the node
/// weights and the passage similarities; falls back to plain passage
/// similarity when no node weight survives.
pub fn ppr_retrieve(
    question: &str,
    g: &KnowledgeGraph,
    indexes: &GraphIndexes,
    cfg: &PPRConfig,
    gateway: &Gateway,
) -> Result<RetrievalResult> {
    cfg.validate()?;
    if cfg.top_k_passages == 0 {
        return Ok(RetrievalResult::default());
    }
    let query = gateway.embed_one(question)?;
    let node_dict = match cfg.personalization {
        Personalization::Edges => {
            query_to_edge_scores(question, &query, g, &indexes.edges, cfg, gateway)?
        }
        Personalization::Ner => ner_node_scores(question, g, &indexes.nodes, gateway)?,
    };
    let text_dict = query_to_passage_scores(&query, &indexes.passages, cfg.weight_adjust)?;
    if node_dict.is_empty() {
        let mut r = take_top(text_dict.into_iter().collect(), cfg.top_k_passages);
        r.diagnostic = Some("no node weights; passage similarity only".into());
        return Ok(r);
    }
    let mut personalization = vec![0.0; g.node_count()];
    for (id, w) in &node_dict {
        if let Some(p) = g.position(*id) {
            personalization[p] += w;
        }
    }
    for (pid, w) in &text_dict {
        if let Some(p) = g.passage_node(pid).and_then(|n| g.position(n)) {
            personalization[p] += w.max(0.0);
        }
    }
    let adj = Adjacency::undirected(g);
    let pr = personalized_pagerank(&adj, &personalization, &cfg.pagerank())?;
    let all: Vec<usize> = (0..g.node_count()).collect();
    let ranked = aggregate_passages(g, &all, &pr, None);
    Ok(take_top(ranked, cfg.top_k_passages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::MockChat;
    use crate::graph::{EdgeKind, NodeKind};

    fn identity_gateway() -> Gateway {
        let chat = MockChat::new()
            .rule_fn("list of candidate facts", |req| {
                req.user_text()
                    .lines()
                    .find_map(|l| l.strip_prefix("Facts: "))
                    .unwrap_or("[]")
                    .to_string()
            })
            .unwrap()
            .fallback("[]");
        Gateway::mock(chat)
    }

    fn one_edge() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        g.add_triple("Ada", "wrote", "Notes", EdgeKind::EntityEntity, "p1")
            .unwrap();
        g
    }

    #[test]
    fn single_edge_splits_evenly() {
        let g = one_edge();
        let gw = identity_gateway();
        let idx = GraphIndexes::build(&g, &gw).unwrap();
        let q = gw.embed_one("who wrote notes").unwrap();
        let s = query_to_edge_scores("who wrote notes", &q, &g, &idx.edges, &PPRConfig::default(), &gw)
            .unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.values().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn filter_rejecting_everything_gives_empty_map() {
        let g = one_edge();
        let gw = Gateway::mock(MockChat::new().fallback("[]"));
        let idx = GraphIndexes::build(&g, &gw).unwrap();
        let q = gw.embed_one("x").unwrap();
        let s = query_to_edge_scores("x", &q, &g, &idx.edges, &PPRConfig::default(), &gw).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn passage_scores_scale() {
        let mut g = one_edge();
        g.add_passage("p1", "Ada wrote Notes").unwrap();
        let gw = identity_gateway();
        let idx = GraphIndexes::build(&g, &gw).unwrap();
        let q = gw.embed_one("Ada wrote Notes").unwrap();
        let one = query_to_passage_scores(&q, &idx.passages, 1.0).unwrap();
        assert!((one["p1"] - 1.0).abs() < 1e-12);
        let zero = query_to_passage_scores(&q, &idx.passages, 0.0).unwrap();
        assert_eq!(zero["p1"], 0.0);
    }

    #[test]
    fn empty_node_map_falls_back_to_similarity() {
        let mut g = one_edge();
        g.add_passage("p1", "Ada wrote Notes").unwrap();
        g.add_passage("p2", "unrelated text").unwrap();
        let gw = Gateway::mock(MockChat::new().fallback("[]"));
        let idx = GraphIndexes::build(&g, &gw).unwrap();
        let r = ppr_retrieve("Ada wrote Notes", &g, &idx, &PPRConfig::default(), &gw).unwrap();
        assert_eq!(r.passages[0], "p1");
        assert!(r.diagnostic.is_some());
        let zero = PPRConfig {
            top_k_passages: 0,
            ..Default::default()
        };
        assert!(ppr_retrieve("Ada", &g, &idx, &zero, &gw).unwrap().passages.is_empty());
        assert!(g.find(NodeKind::Entity, "Ada").is_some());
    }
}
