use std::fmt;

use serde::Serialize;

use super::{EdgeKind, KnowledgeGraph, NodeKind};

/// Node and edge counts by kind, in the row order of the usual
/// graph-statistics table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub text_chunks: usize,
    pub entities: usize,
    pub events: usize,
    pub concepts: usize,
    pub entity_entity_edges: usize,
    pub event_entity_edges: usize,
    pub event_event_edges: usize,
    pub conceptualization_edges: usize,
    pub mention_edges: usize,
}

impl GraphStats {
    pub fn of(g: &KnowledgeGraph) -> Self {
        let mut s = GraphStats {
            text_chunks: g.passages().len(),
            ..Default::default()
        };
        for n in g.nodes() {
            match n.kind {
                NodeKind::Entity => s.entities += 1,
                NodeKind::Event => s.events += 1,
                NodeKind::Concept => s.concepts += 1,
                NodeKind::Passage => {}
            }
        }
        for e in g.edges() {
            match e.kind {
                EdgeKind::EntityEntity => s.entity_entity_edges += 1,
                EdgeKind::EventEntity => s.event_entity_edges += 1,
                EdgeKind::EventEvent => s.event_event_edges += 1,
                EdgeKind::Conceptualization => s.conceptualization_edges += 1,
                EdgeKind::Mention => s.mention_edges += 1,
            }
        }
        s
    }

    /// Entities, events and concepts; passage nodes are not counted.
    pub fn nodes(&self) -> usize {
        self.entities + self.events + self.concepts
    }

    /// Fact and conceptualization edges; mention edges are not counted.
    pub fn edges(&self) -> usize {
        self.entity_entity_edges
            + self.event_entity_edges
            + self.event_event_edges
            + self.conceptualization_edges
    }

    fn rows(&self) -> [(&'static str, usize); 11] {
        [
            ("# Text Chunks", self.text_chunks),
            ("# Entities", self.entities),
            ("# Events", self.events),
            ("# Concepts", self.concepts),
            ("# Nodes", self.nodes()),
            ("# Entity-Entity Edges", self.entity_entity_edges),
            ("# Event-Entity Edges", self.event_entity_edges),
            ("# Event-Event Edges", self.event_event_edges),
            ("# Conceptualization Edges", self.conceptualization_edges),
            ("# Edges", self.edges()),
            ("# Mention Edges", self.mention_edges),
        ]
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, value) in self.rows() {
            writeln!(f, "{label:<28}{value:>12}")?;
        }
        Ok(())
    }
}
