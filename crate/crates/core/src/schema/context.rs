use rand::seq::index::sample;
use rand::Rng;

use crate::graph::{KnowledgeGraph, NodeId};

/// Context string for an entity from up to `n` random neighbors.
///
/// Takes up to ceil(n/2) predecessors, written "neighbor relation", and
/// floor(n/2) successors, written "relation neighbor"; when one side runs
/// short the other side fills the remaining budget. Only fact edges count.
pub fn sample_entity_context<R: Rng + ?Sized>(
    g: &KnowledgeGraph,
    entity: NodeId,
    n: usize,
    rng: &mut R,
) -> String {
    let Some(pos) = g.position(entity) else {
        return String::new();
    };
    if n == 0 {
        return String::new();
    }
    let edges = g.edges();
    let preds: Vec<String> = g
        .in_edges(pos)
        .iter()
        .map(|&i| &edges[i])
        .filter(|e| e.kind.is_fact())
        .filter_map(|e| g.node(e.head).map(|h| format!("{} {}", h.text, e.relation)))
        .collect();
    let succs: Vec<String> = g
        .out_edges(pos)
        .iter()
        .map(|&i| &edges[i])
        .filter(|e| e.kind.is_fact())
        .filter_map(|e| g.node(e.tail).map(|t| format!("{} {}", e.relation, t.text)))
        .collect();
    let mut want_pred = n.div_ceil(2).min(preds.len());
    let want_succ = (n - want_pred).min(succs.len());
    want_pred = (n - want_succ).min(preds.len());
    let mut parts = Vec::with_capacity(want_pred + want_succ);
    for (pool, k) in [(&preds, want_pred), (&succs, want_succ)] {
        let mut picked = sample(rng, pool.len(), k).into_vec();
        picked.sort_unstable();
        parts.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    parts.join(", ")
}
