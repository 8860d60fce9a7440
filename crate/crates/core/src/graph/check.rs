//! Structural conformance checks for a finished graph.

use std::fmt;

use super::{KnowledgeGraph, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The id's kind tag disagrees with the stored node kind.
    KindPartition(NodeId),
    /// An edge's kind does not match its endpoint kinds.
    EdgeKind { edge: usize },
    /// An entity or event node has no concept.
    MissingNodeConcept(NodeId),
    /// A fact relation has no concept.
    MissingRelationConcept(String),
    /// A schema map entry points at something that is not a concept node.
    DanglingConcept(NodeId),
    AdjacencyMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::KindPartition(id) => write!(f, "node {id} kind disagrees with its id"),
            Violation::EdgeKind { edge } => write!(f, "edge #{edge} kind contradicts endpoints"),
            Violation::MissingNodeConcept(id) => write!(f, "node {id} has no concept"),
            Violation::MissingRelationConcept(r) => write!(f, "relation {r:?} has no concept"),
            Violation::DanglingConcept(id) => write!(f, "{id} is not a concept node"),
            Violation::AdjacencyMismatch => f.write_str("adjacency indexes are not inverses"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConformanceReport {
    pub violations: Vec<Violation>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the kind partition, edge-kind consistency, adjacency symmetry and
/// schema totality: every entity/event node and every fact relation maps to
/// at least one existing concept.
pub fn check_conformance(g: &KnowledgeGraph) -> ConformanceReport {
    let mut violations = Vec::new();
    for node in g.nodes() {
        if node.id.kind() != node.kind {
            violations.push(Violation::KindPartition(node.id));
        }
    }
    for (i, e) in g.edges().iter().enumerate() {
        let ok = match (g.node(e.head), g.node(e.tail)) {
            (Some(h), Some(t)) => e.kind.admits(h.kind, t.kind),
            _ => false,
        };
        if !ok {
            violations.push(Violation::EdgeKind { edge: i });
        }
    }
    if !g.adjacency_consistent() {
        violations.push(Violation::AdjacencyMismatch);
    }
    let is_concept = |c: &NodeId| g.node(*c).map(|n| n.kind) == Some(NodeKind::Concept);
    for node in g.nodes() {
        if matches!(node.kind, NodeKind::Entity | NodeKind::Event)
            && g.phi().get(&node.id).is_none_or(|s| s.is_empty())
        {
            violations.push(Violation::MissingNodeConcept(node.id));
        }
    }
    for rel in g.relations() {
        if g.psi().get(rel).is_none_or(|s| s.is_empty()) {
            violations.push(Violation::MissingRelationConcept(rel.to_string()));
        }
    }
    for c in g.phi().values().chain(g.psi().values()).flatten() {
        if !is_concept(c) {
            violations.push(Violation::DanglingConcept(*c));
        }
    }
    ConformanceReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, Element};

    #[test]
    fn totality_requires_concepts() {
        let mut g = KnowledgeGraph::new();
        let (a, b) = g
            .add_triple("A", "knows", "B", EdgeKind::EntityEntity, "p")
            .unwrap();
        let report = check_conformance(&g);
        assert_eq!(report.violations.len(), 3);
        g.attach_concept(&Element::Node(a), "person").unwrap();
        g.attach_concept(&Element::Node(b), "person").unwrap();
        assert_eq!(check_conformance(&g).violations.len(), 1);
        g.attach_concept(&Element::Relation("knows".into()), "relate")
            .unwrap();
        assert!(check_conformance(&g).passed());
    }
}
