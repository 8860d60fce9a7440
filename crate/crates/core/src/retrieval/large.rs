use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::pagerank::{personalized_pagerank, Adjacency, PageRankParams};
use super::{ask, link_entities, question_entities, rank_desc, string_list, RetrievalResult};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::graph::{EdgeKind, KnowledgeGraph, NodeKind};
use crate::index::VectorIndex;
use crate::prompts;
use crate::text::fold_key;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LargeKGConfig {
    /// Nearest graph nodes fetched per question entity.
    pub source_nodes: usize,
    /// Node budget of the random-walk sample.
    pub sampling_area: usize,
    pub restart: f64,
    pub top_n_passages: usize,
    /// Only the best-scored sampled nodes feed passage scores; all when unset.
    pub top_nodes: Option<usize>,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for LargeKGConfig {
    fn default() -> Self {
        LargeKGConfig {
            source_nodes: 3,
            sampling_area: 200,
            restart: 0.15,
            top_n_passages: 5,
            top_nodes: None,
            damping: 0.9,
            tolerance: 1e-12,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

impl LargeKGConfig {
    pub fn pagerank(&self) -> PageRankParams {
        PageRankParams {
            damping: self.damping,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pagerank().validate()?;
        if self.source_nodes == 0 || self.sampling_area < self.source_nodes {
            return Err(Error::Config(
                "need sampling_area >= source_nodes >= 1".into(),
            ));
        }
        if !(self.restart > 0.0 && self.restart <= 1.0) {
            return Err(Error::Config("restart probability must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

fn components(adj: &Adjacency, seeds: &[usize]) -> Vec<usize> {
    let mut seen: HashSet<usize> = seeds.iter().copied().collect();
    let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        for &v in &adj.neighbors[u] {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    let mut out: Vec<usize> = seen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Node positions visited by a random walk with restart from `seeds`,
/// ascending. The walk stops at `area` distinct nodes or after
/// `100 * area` steps; when the seeds' components fit in `area` they are
/// returned whole.
pub fn rwr_sample<R: Rng + ?Sized>(
    adj: &Adjacency,
    seeds: &[usize],
    area: usize,
    restart: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut seeds: Vec<usize> = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return seeds;
    }
    let whole = components(adj, &seeds);
    if whole.len() <= area {
        return whole;
    }
    let mut sample: HashSet<usize> = seeds.iter().copied().collect();
    let mut at = seeds[0];
    let cap = area.saturating_mul(100);
    for _ in 0..cap {
        if sample.len() >= area {
            break;
        }
        let nbrs = &adj.neighbors[at];
        at = if nbrs.is_empty() || rng.random_bool(restart) {
            seeds[rng.random_range(0..seeds.len())]
        } else {
            nbrs[rng.random_range(0..nbrs.len())]
        };
        sample.insert(at);
    }
    let mut out: Vec<usize> = sample.into_iter().collect();
    out.sort_unstable();
    out
}

/// Passage scores from node scores: each node credits the passages it has
/// a mention edge to, and a passage node credits its own passage.
///
/// `nodes` are graph positions with `scores` aligned to them; `top_nodes`
/// limits crediting to the best-scored nodes. Passages with no credit are
/// left out.
pub fn aggregate_passages(
    g: &KnowledgeGraph,
    nodes: &[usize],
    scores: &[f64],
    top_nodes: Option<usize>,
) -> Vec<(String, f64)> {
    let mut ranked: Vec<(usize, f64)> = nodes.iter().copied().zip(scores.iter().copied()).collect();
    if let Some(n) = top_nodes {
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        ranked.truncate(n);
    }
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (pos, score) in ranked {
        let node = g.node_at(pos);
        if node.kind == NodeKind::Passage {
            *out.entry(node.text.clone()).or_default() += score;
            continue;
        }
        for &e in g.out_edges(pos) {
            let edge = &g.edges()[e];
            if edge.kind == EdgeKind::Mention {
                if let Some(p) = g.node(edge.tail) {
                    *out.entry(p.text.clone()).or_default() += score;
                }
            }
        }
    }
    out.into_iter().filter(|(_, s)| *s > 0.0).collect()
}

const FILTER_TOKENS: u32 = 1024;

/// Passage retrieval over a random-walk sample around question entities.
pub fn large_kg_retrieve(
    question: &str,
    g: &KnowledgeGraph,
    node_index: &VectorIndex,
    cfg: &LargeKGConfig,
    gateway: &Gateway,
) -> Result<RetrievalResult> {
    cfg.validate()?;
    let nothing = || RetrievalResult {
        scores: vec![0.0],
        diagnostic: Some("empty personalization".into()),
        ..Default::default()
    };
    let entities = question_entities(question, gateway)?;
    let mut candidates = Vec::new();
    for e in &entities {
        for (id, _) in link_entities(std::slice::from_ref(e), g, node_index, cfg.source_nodes, gateway)? {
            if !candidates.contains(&id) {
                candidates.push(id);
            }
        }
    }
    if candidates.is_empty() {
        return Ok(nothing());
    }
    let texts: Vec<String> = candidates
        .iter()
        .filter_map(|id| g.node(*id).map(|n| n.text.clone()))
        .collect();
    let raw = ask(
        gateway,
        prompts::NODE_FILTER,
        format!("Question: {question}\nNodes: {}", Value::from(texts)),
        FILTER_TOKENS,
    )?;
    let kept: HashSet<String> = string_list(&raw).iter().map(|s| fold_key(s)).collect();
    let mut seeds: Vec<usize> = candidates
        .iter()
        .filter(|id| g.node(**id).is_some_and(|n| kept.contains(&fold_key(&n.text))))
        .filter_map(|id| g.position(*id))
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return Ok(nothing());
    }
    let adj = Adjacency::undirected(g);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sample = rwr_sample(&adj, &seeds, cfg.sampling_area, cfg.restart, &mut rng);
    let sub = adj.induced(&sample);
    let personalization: Vec<f64> = sample
        .iter()
        .map(|p| if seeds.binary_search(p).is_ok() { 1.0 } else { 0.0 })
        .collect();
    let scores = personalized_pagerank(&sub, &personalization, &cfg.pagerank())?;
    let mut ranked = aggregate_passages(g, &sample, &scores, cfg.top_nodes);
    rank_desc(&mut ranked);
    ranked.truncate(cfg.top_n_passages);
    let (passages, scores) = ranked.into_iter().unzip();
    Ok(RetrievalResult {
        passages,
        scores,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj(n: usize, edges: &[(usize, usize)]) -> Adjacency {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        Adjacency { neighbors }
    }

    #[test]
    fn isolated_seeds_sample_themselves() {
        let a = adj(4, &[(2, 3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rwr_sample(&a, &[0, 1], 2, 0.15, &mut rng), [0, 1]);
    }

    #[test]
    fn sample_respects_budget_and_keeps_seeds() {
        let edges: Vec<(usize, usize)> = (1..50).map(|i| (i - 1, i)).collect();
        let a = adj(50, &edges);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = rwr_sample(&a, &[10, 30], 8, 0.15, &mut rng);
        assert!(s.len() <= 8);
        assert!(s.contains(&10) && s.contains(&30));
        let all = rwr_sample(&a, &[10], 50, 0.15, &mut rng);
        assert_eq!(all.len(), 50);
    }

    #[test]
    fn walk_is_seeded() {
        let edges: Vec<(usize, usize)> = (1..100).map(|i| (i - 1, i)).collect();
        let a = adj(100, &edges);
        let x = rwr_sample(&a, &[50], 10, 0.15, &mut ChaCha8Rng::seed_from_u64(4));
        let y = rwr_sample(&a, &[50], 10, 0.15, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(x, y);
    }

    #[test]
    fn config_bounds() {
        LargeKGConfig::default().validate().unwrap();
        let bad = LargeKGConfig {
            sampling_area: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
