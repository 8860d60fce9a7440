//! The fixture corpus through extraction, assembly, induction, indexing and
//! retrieval.

mod common;

use kgforge::extract::pipeline::DirSink;
use kgforge::extract::{build_graph, load_batches, run_extraction, ParseStatus, PipelineConfig, Stage};
use kgforge::graph::{check_conformance, load, save, write_graph, GraphStats};
use kgforge::retrieval::{ppr_retrieve, PPRConfig};
use kgforge::schema::{induce_schema, InductionConfig};
use kgforge::{EdgeKind, GraphIndexes, GraphVariant, NodeKind};

#[test]
fn batch_files_reproduce_the_in_memory_graph() {
    let dir = tempfile::tempdir().unwrap();
    let gw = common::mock();
    let cfg = PipelineConfig::default();
    let outcome = run_extraction(common::fixture_corpus(), &cfg, &gw, &mut DirSink::new(dir.path())).unwrap();
    assert_eq!(outcome.batches.len(), 3 * outcome.chunks);
    assert_eq!(outcome.batch_count, outcome.chunks.div_ceil(cfg.batch_size));
    assert_eq!(outcome.files.len(), 3 * outcome.batch_count);
    assert!(outcome.batches.iter().all(|b| b.parse_status != ParseStatus::Failed));
    for stage in Stage::ALL {
        assert!(dir.path().join(stage.as_str()).join("0.jsonl").is_file());
    }

    let loaded = load_batches(dir.path()).unwrap();
    assert!(loaded.errors.is_empty());
    let mut from_disk = loaded.batches.clone();
    let mut in_memory = outcome.batches.clone();
    let key = |b: &kgforge::extract::TripleBatch| (b.batch_index, b.stage, b.chunk_id.clone());
    from_disk.sort_by_key(key);
    in_memory.sort_by_key(key);
    assert_eq!(from_disk, in_memory);

    let (a, report) = build_graph(&outcome.batches).unwrap();
    let (b, _) = build_graph(&loaded.batches).unwrap();
    assert_eq!(write_graph(&a), write_graph(&b));
    assert_eq!(report.rejected, 0);
}

#[test]
fn every_chunk_is_a_passage_with_mentions() {
    let gw = common::mock();
    let g = common::build_kg(common::fixture_corpus(), &gw, None, false);
    assert_eq!(g.passages().len(), 20);
    for node in g.nodes().iter().filter(|n| matches!(n.kind, NodeKind::Entity | NodeKind::Event)) {
        assert!(!node.source_refs.is_empty(), "{} has no source", node.text);
        let pos = g.position(node.id).unwrap();
        let mentioned = g.out_edges(pos).iter().any(|&e| g.edges()[e].kind == EdgeKind::Mention);
        assert!(mentioned, "{} is never mentioned", node.text);
    }
}

#[test]
fn full_pipeline_conforms_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let gw = common::mock();
    let mut g = common::build_kg(common::fixture_corpus(), &gw, None, false);
    let outcome = induce_schema(&mut g, &InductionConfig::default(), &gw, None).unwrap();
    assert!(!outcome.records.is_empty());
    let report = check_conformance(&g);
    assert!(report.passed(), "{:?}", report.violations);

    let stats = GraphStats::of(&g);
    assert_eq!(stats.nodes() + stats.text_chunks, g.node_count());
    assert_eq!(stats.edges() + stats.mention_edges, g.edge_count());

    let path = dir.path().join("g.kgf");
    save(&g, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(write_graph(&back), write_graph(&g));
    assert!(check_conformance(&back).passed());
}

#[test]
fn variants_drop_the_right_kinds() {
    let gw = common::mock();
    let g = common::build_kg(common::fixture_corpus(), &gw, None, true);
    let entity = g.variant(GraphVariant::Entity);
    assert!(entity.nodes().iter().all(|n| matches!(n.kind, NodeKind::Entity | NodeKind::Passage)));
    assert!(entity.edges().iter().all(|e| matches!(e.kind, EdgeKind::EntityEntity | EdgeKind::Mention)));
    let ee = g.variant(GraphVariant::EntityEvent);
    assert!(ee.nodes().iter().all(|n| n.kind != NodeKind::Concept));
    assert!(ee.nodes_of_kind(NodeKind::Event).count() > 0);
    assert!(entity.node_count() < ee.node_count() && ee.node_count() < g.node_count());
}

#[test]
fn retrieval_finds_the_founding_passage() {
    let gw = common::mock();
    let g = common::build_kg(common::fixture_corpus(), &gw, None, true);
    let idx = GraphIndexes::build(&g, &gw).unwrap();
    let r = ppr_retrieve("Who founded Corvid Freight?", &g, &idx, &PPRConfig::default(), &gw).unwrap();
    assert_eq!(r.passages.first().map(String::as_str), Some("d02#0"));
    assert_eq!(r.passages.len(), r.scores.len());
}
