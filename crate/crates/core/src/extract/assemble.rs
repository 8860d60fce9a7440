use serde::Serialize;

use super::parse::{ParseStatus, Triple};
use super::pipeline::TripleBatch;
use super::Stage;
use crate::error::Result;
use crate::graph::{EdgeKind, KnowledgeGraph, NodeId, NodeKind};

/// Relation given to event-entity edges, which the stage output leaves
/// unnamed. Edges run from the entity to the event.
pub const PARTICIPATES_IN: &str = "participates_in";

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct AssemblyReport {
    pub records: usize,
    pub failed_records: usize,
    pub triples: usize,
    /// Triples refused by the graph (empty fields).
    pub rejected: usize,
}

/// Builds the extraction graph: one passage per chunk, fact edges from the
/// parsed triples, and `mentioned_in` edges from every endpoint to its chunk.
///
/// Records are applied in (batch index, stage) order whatever order they
/// arrive in, so a resumed run assembles the same graph as a fresh one.
pub fn build_graph(batches: &[TripleBatch]) -> Result<(KnowledgeGraph, AssemblyReport)> {
    let mut order: Vec<&TripleBatch> = batches.iter().collect();
    order.sort_by_key(|b| (b.batch_index, b.stage));
    let mut g = KnowledgeGraph::new();
    let mut report = AssemblyReport::default();
    for rec in order {
        report.records += 1;
        g.add_passage(&rec.chunk_id, &rec.text)?;
        if rec.parse_status == ParseStatus::Failed {
            report.failed_records += 1;
            continue;
        }
        for triple in &rec.triples {
            let inserted = match (rec.stage, triple) {
                (Stage::EventEntity, Triple::Participation { event, entities }) => entities
                    .iter()
                    .map(|e| {
                        g.add_typed_triple(
                            e,
                            NodeKind::Entity,
                            PARTICIPATES_IN,
                            event,
                            NodeKind::Event,
                            &rec.chunk_id,
                        )
                    })
                    .collect::<Vec<_>>(),
                (stage, Triple::Relation { head, relation, tail }) if stage != Stage::EventEntity => {
                    let kind = if stage == Stage::EntityRelation {
                        EdgeKind::EntityEntity
                    } else {
                        EdgeKind::EventEvent
                    };
                    vec![g.add_triple(head, relation, tail, kind, &rec.chunk_id)]
                }
                _ => vec![],
            };
            for r in inserted {
                match r {
                    Ok((h, t)) => {
                        report.triples += 1;
                        mention(&mut g, h, &rec.chunk_id)?;
                        mention(&mut g, t, &rec.chunk_id)?;
                    }
                    Err(e) => {
                        log::debug!("{}: {e}", rec.chunk_id);
                        report.rejected += 1;
                    }
                }
            }
        }
    }
    Ok((g, report))
}

fn mention(g: &mut KnowledgeGraph, node: NodeId, passage: &str) -> Result<()> {
    g.add_mention(node, passage).map(|_| ())
}
