//! Knowledge graph with a conceptual schema.
//!
//! Nodes are partitioned into entities, events, concepts and passages. Fact
//! edges connect entities and events; conceptualization edges point from a
//! node to one of its concepts; mention edges tie a node to the passage it
//! was extracted from. `phi` maps nodes to concept sets and `psi` maps
//! relation strings to concept sets.

mod check;
pub(crate) mod persist;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, TripleField};
use crate::text::{collapse_whitespace, fold_key};

pub use check::{check_conformance, ConformanceReport, Violation};
pub use persist::{load, read_graph, save, write_graph, FORMAT_VERSION};
pub use stats::GraphStats;

/// Relation label used for node → concept edges.
pub const HAS_CONCEPT: &str = "has_concept";
/// Relation label used for node → passage edges.
pub const MENTIONED_IN: &str = "mentioned_in";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Entity,
    Event,
    Concept,
    Passage,
}

impl NodeKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            NodeKind::Entity => 1,
            NodeKind::Event => 2,
            NodeKind::Concept => 3,
            NodeKind::Passage => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(NodeKind::Entity),
            2 => Some(NodeKind::Event),
            3 => Some(NodeKind::Concept),
            4 => Some(NodeKind::Passage),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Entity => "entity",
            NodeKind::Event => "event",
            NodeKind::Concept => "concept",
            NodeKind::Passage => "passage",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable node identifier.
///
/// The top byte carries the node kind, the remaining 120 bits come from a
/// SHA-256 digest of the dedup key, so ids of different kinds can never be
/// equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u128);

impl NodeId {
    /// Id for a node of `kind` whose text folds to the same key as `text`.
    pub fn derive(kind: NodeKind, text: &str) -> Self {
        let key = match kind {
            // passages are keyed by their id, verbatim
            NodeKind::Passage => text.to_string(),
            _ => fold_key(text),
        };
        let mut hasher = Sha256::new();
        hasher.update([kind.tag()]);
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 16];
        bytes[0] = kind.tag();
        bytes[1..].copy_from_slice(&digest[..15]);
        NodeId(u128::from_be_bytes(bytes))
    }

    pub fn kind(self) -> NodeKind {
        NodeKind::from_tag((self.0 >> 120) as u8).expect("node id carries a valid kind tag")
    }

    pub fn as_u128(self) -> u128 {
        self.0
    }

    pub(crate) fn from_raw(raw: u128) -> Option<Self> {
        NodeKind::from_tag((raw >> 120) as u8).map(|_| NodeId(raw))
    }

    /// Fixed-width lowercase hex, so lexicographic order equals numeric order.
    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 32 {
            return None;
        }
        u128::from_str_radix(s, 16).ok().and_then(Self::from_raw)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        NodeId::from_hex(&s).ok_or_else(|| serde::de::Error::custom(format!("bad node id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    /// Passage ids this node was extracted from; empty for concepts.
    pub source_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    EntityEntity,
    EventEntity,
    EventEvent,
    Conceptualization,
    Mention,
}

impl EdgeKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            EdgeKind::EntityEntity => 1,
            EdgeKind::EventEntity => 2,
            EdgeKind::EventEvent => 3,
            EdgeKind::Conceptualization => 4,
            EdgeKind::Mention => 5,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(EdgeKind::EntityEntity),
            2 => Some(EdgeKind::EventEntity),
            3 => Some(EdgeKind::EventEvent),
            4 => Some(EdgeKind::Conceptualization),
            5 => Some(EdgeKind::Mention),
            _ => None,
        }
    }

    /// Whether this is an extracted fact edge (as opposed to schema or
    /// provenance bookkeeping).
    pub fn is_fact(self) -> bool {
        matches!(
            self,
            EdgeKind::EntityEntity | EdgeKind::EventEntity | EdgeKind::EventEvent
        )
    }

    /// Endpoint kinds that [`KnowledgeGraph::add_triple`] creates for a fact
    /// edge. Event-entity triples are written event first.
    pub fn triple_endpoints(self) -> Option<(NodeKind, NodeKind)> {
        match self {
            EdgeKind::EntityEntity => Some((NodeKind::Entity, NodeKind::Entity)),
            EdgeKind::EventEntity => Some((NodeKind::Event, NodeKind::Entity)),
            EdgeKind::EventEvent => Some((NodeKind::Event, NodeKind::Event)),
            _ => None,
        }
    }

    /// Fact edge kind connecting the two node kinds, in either orientation.
    pub fn between(head: NodeKind, tail: NodeKind) -> Option<Self> {
        use NodeKind::*;
        match (head, tail) {
            (Entity, Entity) => Some(EdgeKind::EntityEntity),
            (Event, Entity) | (Entity, Event) => Some(EdgeKind::EventEntity),
            (Event, Event) => Some(EdgeKind::EventEvent),
            _ => None,
        }
    }

    pub fn admits(self, head: NodeKind, tail: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            EdgeKind::EntityEntity => head == Entity && tail == Entity,
            EdgeKind::EventEntity => {
                (head == Event && tail == Entity) || (head == Entity && tail == Event)
            }
            EdgeKind::EventEvent => head == Event && tail == Event,
            EdgeKind::Conceptualization => matches!(head, Entity | Event) && tail == Concept,
            EdgeKind::Mention => matches!(head, Entity | Event | Concept) && tail == Passage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Passage(String),
    Induced,
}

impl Provenance {
    pub fn passage(id: impl Into<String>) -> Self {
        Provenance::Passage(id.into())
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Passage(p) => f.write_str(p),
            Provenance::Induced => f.write_str("induced"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub head: NodeId,
    pub relation: String,
    pub tail: NodeId,
    pub kind: EdgeKind,
    pub provenance: Provenance,
}

/// Something that can be conceptualized: a node or a relation string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Node(NodeId),
    Relation(String),
}

/// Node and edge subsets used by the retrieval graph variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphVariant {
    Entity,
    EntityEvent,
    #[default]
    Full,
}

impl GraphVariant {
    fn keeps_node(self, kind: NodeKind) -> bool {
        match self {
            GraphVariant::Entity => matches!(kind, NodeKind::Entity | NodeKind::Passage),
            GraphVariant::EntityEvent => kind != NodeKind::Concept,
            GraphVariant::Full => true,
        }
    }
}

/// In-memory knowledge graph.
///
/// Built by a single writer, then shared read-only (`&KnowledgeGraph` is
/// `Send + Sync`).
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    node_index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    edge_keys: HashSet<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    relation_uses: HashMap<String, usize>,
    phi: BTreeMap<NodeId, BTreeSet<NodeId>>,
    psi: BTreeMap<String, BTreeSet<NodeId>>,
    passages: BTreeMap<String, String>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.phi == other.phi
            && self.psi == other.psi
            && self.passages == other.passages
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    /// Dense position of a node, stable for the lifetime of the graph.
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn node_at(&self, pos: usize) -> &Node {
        &self.nodes[pos]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node_index.contains_key(&id)
    }

    /// Looks a node up by its text and kind, using the same folding as the
    /// dedup key.
    pub fn find(&self, kind: NodeKind, text: &str) -> Option<&Node> {
        self.node(NodeId::derive(kind, text))
    }

    /// Indices into [`edges`](Self::edges) of edges leaving the node at `pos`.
    pub fn out_edges(&self, pos: usize) -> &[usize] {
        &self.out_edges[pos]
    }

    /// Indices into [`edges`](Self::edges) of edges entering the node at `pos`.
    pub fn in_edges(&self, pos: usize) -> &[usize] {
        &self.in_edges[pos]
    }

    pub fn phi(&self) -> &BTreeMap<NodeId, BTreeSet<NodeId>> {
        &self.phi
    }

    pub fn psi(&self) -> &BTreeMap<String, BTreeSet<NodeId>> {
        &self.psi
    }

    pub fn passages(&self) -> &BTreeMap<String, String> {
        &self.passages
    }

    pub fn passage_text(&self, id: &str) -> Option<&str> {
        self.passages.get(id).map(String::as_str)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Distinct relation strings of fact edges, in first-use order.
    pub fn relations(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.edges
            .iter()
            .filter(|e| e.kind.is_fact())
            .filter(|e| seen.insert(e.relation.as_str()))
            .map(|e| e.relation.as_str())
            .collect()
    }

    fn upsert_node(&mut self, kind: NodeKind, text: &str, source: Option<&str>) -> NodeId {
        let id = NodeId::derive(kind, text);
        let pos = match self.node_index.get(&id) {
            Some(&pos) => pos,
            None => {
                let pos = self.nodes.len();
                self.nodes.push(Node {
                    id,
                    kind,
                    text: collapse_whitespace(text),
                    source_refs: Vec::new(),
                });
                self.node_index.insert(id, pos);
                self.out_edges.push(Vec::new());
                self.in_edges.push(Vec::new());
                pos
            }
        };
        if let Some(src) = source {
            let refs = &mut self.nodes[pos].source_refs;
            if !refs.iter().any(|r| r == src) {
                refs.push(src.to_string());
            }
        }
        id
    }

    /// Inserts `edge` unless an identical one exists. Returns whether it was new.
    fn insert_edge(&mut self, edge: Edge) -> bool {
        if self.edge_keys.contains(&edge) {
            return false;
        }
        let idx = self.edges.len();
        let head = self.node_index[&edge.head];
        let tail = self.node_index[&edge.tail];
        self.out_edges[head].push(idx);
        self.in_edges[tail].push(idx);
        if edge.kind.is_fact() {
            *self.relation_uses.entry(edge.relation.clone()).or_default() += 1;
        }
        self.edge_keys.insert(edge.clone());
        self.edges.push(edge);
        true
    }

    /// Inserts a fact triple, creating or reusing both endpoint nodes.
    ///
    /// Endpoint kinds follow [`EdgeKind::triple_endpoints`]. Inserting the
    /// same triple with the same provenance twice is a no-op.
    pub fn add_triple(
        &mut self,
        head: &str,
        relation: &str,
        tail: &str,
        kind: EdgeKind,
        provenance: &str,
    ) -> Result<(NodeId, NodeId)> {
        let (hk, tk) = kind
            .triple_endpoints()
            .ok_or_else(|| Error::InvalidEdgeKind(format!("{kind:?}")))?;
        self.add_typed_triple(head, hk, relation, tail, tk, provenance)
    }

    /// Inserts a fact triple with explicit endpoint kinds; the edge kind is
    /// inferred, so event-entity triples may point either way.
    pub fn add_typed_triple(
        &mut self,
        head: &str,
        head_kind: NodeKind,
        relation: &str,
        tail: &str,
        tail_kind: NodeKind,
        provenance: &str,
    ) -> Result<(NodeId, NodeId)> {
        let kind = EdgeKind::between(head_kind, tail_kind)
            .ok_or_else(|| Error::InvalidEdgeKind(format!("{head_kind} -> {tail_kind}")))?;
        if collapse_whitespace(head).is_empty() {
            return Err(Error::RejectedTriple {
                field: TripleField::Head,
            });
        }
        let relation = collapse_whitespace(relation);
        if relation.is_empty() {
            return Err(Error::RejectedTriple {
                field: TripleField::Relation,
            });
        }
        if collapse_whitespace(tail).is_empty() {
            return Err(Error::RejectedTriple {
                field: TripleField::Tail,
            });
        }
        let h = self.upsert_node(head_kind, head, Some(provenance));
        let t = self.upsert_node(tail_kind, tail, Some(provenance));
        self.insert_edge(Edge {
            head: h,
            relation,
            tail: t,
            kind,
            provenance: Provenance::passage(provenance),
        });
        Ok((h, t))
    }

    /// Registers a passage and its node. Re-adding an id keeps the first text.
    pub fn add_passage(&mut self, id: &str, text: &str) -> Result<NodeId> {
        if id.trim().is_empty() {
            return Err(Error::Format("passage id must be non-empty".into()));
        }
        self.passages
            .entry(id.to_string())
            .or_insert_with(|| text.to_string());
        let node = NodeId::derive(NodeKind::Passage, id);
        if !self.node_index.contains_key(&node) {
            let pos = self.nodes.len();
            self.nodes.push(Node {
                id: node,
                kind: NodeKind::Passage,
                text: id.to_string(),
                source_refs: Vec::new(),
            });
            self.node_index.insert(node, pos);
            self.out_edges.push(Vec::new());
            self.in_edges.push(Vec::new());
        }
        Ok(node)
    }

    /// Passage node id for a passage id.
    pub fn passage_node(&self, passage_id: &str) -> Option<NodeId> {
        let id = NodeId::derive(NodeKind::Passage, passage_id);
        self.contains(id).then_some(id)
    }

    /// Adds a `mentioned_in` edge from `node` to the passage node.
    pub fn add_mention(&mut self, node: NodeId, passage_id: &str) -> Result<bool> {
        let head_kind = self
            .node(node)
            .ok_or_else(|| Error::NotFound(format!("node {node}")))?
            .kind;
        let passage = self
            .passage_node(passage_id)
            .ok_or_else(|| Error::NotFound(format!("passage {passage_id}")))?;
        if !EdgeKind::Mention.admits(head_kind, NodeKind::Passage) {
            return Err(Error::InvalidEdgeKind(format!("mention from {head_kind}")));
        }
        Ok(self.insert_edge(Edge {
            head: node,
            relation: MENTIONED_IN.to_string(),
            tail: passage,
            kind: EdgeKind::Mention,
            provenance: Provenance::passage(passage_id),
        }))
    }

    /// Maps `element` to the concept named by `phrase`.
    ///
    /// Nodes gain a `has_concept` edge and a `phi` entry; relations gain a
    /// `psi` entry only.
    pub fn attach_concept(&mut self, element: &Element, phrase: &str) -> Result<NodeId> {
        if collapse_whitespace(phrase).is_empty() {
            return Err(Error::Format("concept phrase must be non-empty".into()));
        }
        match element {
            Element::Node(id) => {
                let kind = self
                    .node(*id)
                    .ok_or_else(|| Error::NotFound(format!("node {id}")))?
                    .kind;
                if !matches!(kind, NodeKind::Entity | NodeKind::Event) {
                    return Err(Error::NotConceptualizable(format!("{kind} node {id}")));
                }
                let concept = self.upsert_node(NodeKind::Concept, phrase, None);
                self.phi.entry(*id).or_default().insert(concept);
                self.insert_edge(Edge {
                    head: *id,
                    relation: HAS_CONCEPT.to_string(),
                    tail: concept,
                    kind: EdgeKind::Conceptualization,
                    provenance: Provenance::Induced,
                });
                Ok(concept)
            }
            Element::Relation(rel) => {
                let rel = collapse_whitespace(rel);
                if !self.relation_uses.contains_key(&rel) {
                    return Err(Error::NotFound(format!("relation {rel:?}")));
                }
                let concept = self.upsert_node(NodeKind::Concept, phrase, None);
                self.psi.entry(rel).or_default().insert(concept);
                Ok(concept)
            }
        }
    }

    /// Copy containing only the nodes of `variant` and the edges among them.
    pub fn variant(&self, variant: GraphVariant) -> KnowledgeGraph {
        if variant == GraphVariant::Full {
            return self.clone();
        }
        let mut g = KnowledgeGraph::new();
        for node in &self.nodes {
            if variant.keeps_node(node.kind) {
                let pos = g.nodes.len();
                g.nodes.push(node.clone());
                g.node_index.insert(node.id, pos);
                g.out_edges.push(Vec::new());
                g.in_edges.push(Vec::new());
            }
        }
        for edge in &self.edges {
            if g.contains(edge.head) && g.contains(edge.tail) {
                g.insert_edge(edge.clone());
            }
        }
        g.phi = self
            .phi
            .iter()
            .filter(|(k, _)| g.contains(**k))
            .map(|(k, v)| (*k, v.iter().copied().filter(|c| g.contains(*c)).collect()))
            .filter(|(_, v): &(NodeId, BTreeSet<NodeId>)| !v.is_empty())
            .collect();
        g.psi = self
            .psi
            .iter()
            .filter(|(r, _)| g.relation_uses.contains_key(*r))
            .map(|(r, v)| (r.clone(), v.iter().copied().filter(|c| g.contains(*c)).collect()))
            .filter(|(_, v): &(String, BTreeSet<NodeId>)| !v.is_empty())
            .collect();
        g.passages = self.passages.clone();
        g
    }

    /// Rebuilds a graph from raw parts, validating every cross reference.
    pub(crate) fn from_parts(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        phi: BTreeMap<NodeId, BTreeSet<NodeId>>,
        psi: BTreeMap<String, BTreeSet<NodeId>>,
        passages: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut g = KnowledgeGraph::new();
        for node in nodes {
            if node.id.kind() != node.kind {
                return Err(Error::Format(format!("node {} kind mismatch", node.id)));
            }
            if g.node_index.contains_key(&node.id) {
                return Err(Error::Format(format!("duplicate node {}", node.id)));
            }
            let pos = g.nodes.len();
            g.node_index.insert(node.id, pos);
            g.nodes.push(node);
            g.out_edges.push(Vec::new());
            g.in_edges.push(Vec::new());
        }
        for edge in edges {
            let (Some(h), Some(t)) = (g.node(edge.head), g.node(edge.tail)) else {
                return Err(Error::Format("edge references unknown node".into()));
            };
            if !edge.kind.admits(h.kind, t.kind) {
                return Err(Error::Format(format!(
                    "edge kind {:?} inconsistent with {} -> {}",
                    edge.kind, h.kind, t.kind
                )));
            }
            if !g.insert_edge(edge) {
                return Err(Error::Format("duplicate edge".into()));
            }
        }
        for concepts in phi.values().chain(psi.values()) {
            if concepts.iter().any(|c| g.node(*c).map(|n| n.kind) != Some(NodeKind::Concept)) {
                return Err(Error::Format("schema map references a non-concept".into()));
            }
        }
        if phi.keys().any(|k| !g.contains(*k)) {
            return Err(Error::Format("phi references unknown node".into()));
        }
        g.phi = phi;
        g.psi = psi;
        g.passages = passages;
        Ok(g)
    }

    /// Checks that the forward and backward adjacency lists mirror each other.
    pub fn adjacency_consistent(&self) -> bool {
        let mut fwd: Vec<(usize, usize)> = Vec::new();
        let mut bwd: Vec<(usize, usize)> = Vec::new();
        for (pos, list) in self.out_edges.iter().enumerate() {
            for &e in list {
                if self.node_index.get(&self.edges[e].head) != Some(&pos) {
                    return false;
                }
                fwd.push((e, self.node_index[&self.edges[e].tail]));
            }
        }
        for (pos, list) in self.in_edges.iter().enumerate() {
            for &e in list {
                if self.node_index.get(&self.edges[e].tail) != Some(&pos) {
                    return false;
                }
                bwd.push((e, pos));
            }
        }
        fwd.sort_unstable();
        bwd.sort_unstable();
        fwd == bwd && fwd.len() == self.edges.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_ids_are_deterministic_and_kind_separated() {
        let a = NodeId::derive(NodeKind::Entity, "Paris");
        assert_eq!(a, NodeId::derive(NodeKind::Entity, "  paris "));
        assert_ne!(a, NodeId::derive(NodeKind::Event, "Paris"));
        assert_eq!(a.kind(), NodeKind::Entity);
        assert_eq!(NodeId::from_hex(&a.to_hex()), Some(a));
    }

    #[test]
    fn duplicate_triple_is_idempotent() {
        let mut g = KnowledgeGraph::new();
        let ids = g
            .add_triple("Paris", "capital of", "France", EdgeKind::EntityEntity, "p1")
            .unwrap();
        let again = g
            .add_triple("Paris", "capital of", "France", EdgeKind::EntityEntity, "p1")
            .unwrap();
        assert_eq!(ids, again);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn event_entity_orientation() {
        let mut g = KnowledgeGraph::new();
        let (h, t) = g
            .add_triple(
                "Sam plays with his dog",
                "involves",
                "Sam",
                EdgeKind::EventEntity,
                "p2",
            )
            .unwrap();
        assert_eq!(g.node(h).unwrap().kind, NodeKind::Event);
        assert_eq!(g.node(t).unwrap().kind, NodeKind::Entity);
    }

    #[test]
    fn empty_text_is_rejected() {
        let mut g = KnowledgeGraph::new();
        let err = g
            .add_triple("", "r", "x", EdgeKind::EntityEntity, "p1")
            .unwrap_err();
        assert!(matches!(
            err,
            Error::RejectedTriple {
                field: TripleField::Head
            }
        ));
        let err = g
            .add_triple("a", " ", "x", EdgeKind::EntityEntity, "p1")
            .unwrap_err();
        assert!(matches!(
            err,
            Error::RejectedTriple {
                field: TripleField::Relation
            }
        ));
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn non_fact_kinds_rejected_by_add_triple() {
        let mut g = KnowledgeGraph::new();
        assert!(g
            .add_triple("a", "r", "b", EdgeKind::Mention, "p")
            .is_err());
    }

    #[test]
    fn attach_concept_to_entity() {
        let mut g = KnowledgeGraph::new();
        let (bmc, _) = g
            .add_triple(
                "Black Mountain College",
                "was started by",
                "John Andrew Rice",
                EdgeKind::EntityEntity,
                "p1",
            )
            .unwrap();
        let edges = g.edge_count();
        let c = g.attach_concept(&Element::Node(bmc), "college").unwrap();
        assert_eq!(g.phi()[&bmc].len(), 1);
        assert_eq!(g.edge_count(), edges + 1);
        let last = g.edges().last().unwrap();
        assert_eq!(last.kind, EdgeKind::Conceptualization);
        assert_eq!(last.relation, HAS_CONCEPT);
        assert_eq!(last.tail, c);

        let concepts = g.nodes_of_kind(NodeKind::Concept).count();
        assert_eq!(g.attach_concept(&Element::Node(bmc), "College").unwrap(), c);
        assert_eq!(g.nodes_of_kind(NodeKind::Concept).count(), concepts);
        assert_eq!(g.edge_count(), edges + 1);
    }

    #[test]
    fn attach_concept_to_relation() {
        let mut g = KnowledgeGraph::new();
        g.add_triple(
            "Alice",
            "participated in",
            "Olympics",
            EdgeKind::EntityEntity,
            "p1",
        )
        .unwrap();
        let edges = g.edge_count();
        let c = g
            .attach_concept(&Element::Relation("participated in".into()), "engage in")
            .unwrap();
        assert!(g.psi()["participated in"].contains(&c));
        assert_eq!(g.edge_count(), edges);
    }

    #[test]
    fn attach_concept_unknown_element() {
        let mut g = KnowledgeGraph::new();
        let ghost = NodeId::derive(NodeKind::Entity, "ghost");
        assert!(matches!(
            g.attach_concept(&Element::Node(ghost), "x"),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            g.attach_concept(&Element::Relation("nope".into()), "x"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn mentions_link_to_passages() {
        let mut g = KnowledgeGraph::new();
        g.add_passage("p1", "Paris is the capital of France.").unwrap();
        let (paris, _) = g
            .add_triple("Paris", "capital of", "France", EdgeKind::EntityEntity, "p1")
            .unwrap();
        assert!(g.add_mention(paris, "p1").unwrap());
        assert!(!g.add_mention(paris, "p1").unwrap());
        assert!(g.add_mention(paris, "p9").is_err());
        assert!(g.adjacency_consistent());
    }

    #[test]
    fn variants_filter_nodes() {
        let mut g = KnowledgeGraph::new();
        let (ev, ent) = g
            .add_triple("Sam walks", "involves", "Sam", EdgeKind::EventEntity, "p")
            .unwrap();
        g.attach_concept(&Element::Node(ent), "person").unwrap();
        g.attach_concept(&Element::Node(ev), "walking").unwrap();
        let e = g.variant(GraphVariant::Entity);
        assert_eq!(e.node_count(), 1);
        assert_eq!(e.edge_count(), 0);
        let ee = g.variant(GraphVariant::EntityEvent);
        assert_eq!(ee.node_count(), 2);
        assert_eq!(ee.edge_count(), 1);
        assert!(ee.phi().is_empty());
        assert_eq!(g.variant(GraphVariant::Full), g);
    }
}
