mod common;

use std::collections::HashSet;

use kgforge::graph::{check_conformance, read_graph, write_graph, Violation};
use kgforge::{EdgeKind, Element, KnowledgeGraph, NodeKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
enum Op {
    Triple(usize, usize, usize, u8, usize),
    Mention(usize, usize),
    Concept(usize, usize),
}

const WORDS: &[&str] = &["Alba", "alba", "ALBA ", "Bryn", "Cato", "Dace", "  bryn", "Eno", "Fyr"];
const RELS: &[&str] = &["knows", "before", "because", "hosts"];

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..WORDS.len(), 0..RELS.len(), 0..WORDS.len(), 1u8..=3, 0..3usize)
            .prop_map(|(h, r, t, k, p)| Op::Triple(h, r, t, k, p)),
        1 => (0..40usize, 0..3usize).prop_map(|(n, p)| Op::Mention(n, p)),
        1 => (0..40usize, 0..WORDS.len()).prop_map(|(n, c)| Op::Concept(n, c)),
    ]
}

fn kind(tag: u8) -> EdgeKind {
    match tag {
        1 => EdgeKind::EntityEntity,
        2 => EdgeKind::EventEntity,
        _ => EdgeKind::EventEvent,
    }
}

fn apply(ops: &[Op]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for p in 0..3 {
        g.add_passage(&format!("p{p}"), &format!("text {p}")).unwrap();
    }
    for op in ops {
        match *op {
            Op::Triple(h, r, t, k, p) => {
                g.add_triple(WORDS[h], RELS[r], WORDS[t], kind(k), &format!("p{p}")).unwrap();
            }
            Op::Mention(n, p) => {
                let n = g.node_at(n % g.node_count()).clone();
                if n.kind != NodeKind::Passage {
                    g.add_mention(n.id, &format!("p{p}")).unwrap();
                }
            }
            Op::Concept(n, c) => {
                let n = g.node_at(n % g.node_count()).clone();
                if matches!(n.kind, NodeKind::Entity | NodeKind::Event) {
                    g.attach_concept(&Element::Node(n.id), WORDS[c]).unwrap();
                }
            }
        }
    }
    g
}

proptest! {
    #[test]
    fn node_ids_are_partitioned_by_kind(ops in prop::collection::vec(op(), 0..60)) {
        let g = apply(&ops);
        let mut seen = HashSet::new();
        for n in g.nodes() {
            prop_assert!(seen.insert(n.id), "duplicate node id");
            prop_assert_eq!(n.id.kind(), n.kind);
        }
        prop_assert!(g.adjacency_consistent());
    }

    #[test]
    fn edge_kinds_agree_with_endpoints(ops in prop::collection::vec(op(), 0..60)) {
        let g = apply(&ops);
        for e in g.edges() {
            let (h, t) = (g.node(e.head).unwrap(), g.node(e.tail).unwrap());
            prop_assert!(e.kind.admits(h.kind, t.kind), "{:?} from {} to {}", e.kind, h.kind, t.kind);
        }
        let report = check_conformance(&g);
        prop_assert!(
            !report.violations.iter().any(|v| matches!(v, Violation::EdgeKind { .. })),
            "{:?}", report.violations
        );
    }

    #[test]
    fn repeated_inserts_change_nothing(ops in prop::collection::vec(op(), 1..40)) {
        let mut g = apply(&ops);
        let (n, e) = (g.node_count(), g.edge_count());
        let before = write_graph(&g);
        for op in &ops {
            if let Op::Triple(h, r, t, k, p) = *op {
                g.add_triple(WORDS[h], RELS[r], WORDS[t], kind(k), &format!("p{p}")).unwrap();
            }
        }
        prop_assert_eq!((g.node_count(), g.edge_count()), (n, e));
        prop_assert_eq!(write_graph(&g), before);
    }

    #[test]
    fn small_graphs_round_trip(ops in prop::collection::vec(op(), 0..60)) {
        let g = apply(&ops);
        let bytes = write_graph(&g);
        let back = read_graph(&bytes).unwrap();
        prop_assert_eq!(back.nodes(), g.nodes());
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.phi(), g.phi());
        prop_assert_eq!(back.psi(), g.psi());
        prop_assert_eq!(back.passages(), g.passages());
    }

    #[test]
    fn reader_rejects_rather_than_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = read_graph(&bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn large_graphs_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = common::random_kg(&mut rng, 40, 1500, 2500);
        prop_assert!(g.node_count() >= 1000);
        let back = read_graph(&write_graph(&g)).unwrap();
        prop_assert_eq!(back.nodes(), g.nodes());
        prop_assert_eq!(back.edges(), g.edges());
    }
}

#[test]
fn concepts_on_every_element_satisfy_totality() {
    let mut g = apply(&[
        Op::Triple(0, 0, 3, 1, 0),
        Op::Triple(3, 1, 4, 3, 1),
        Op::Triple(5, 3, 0, 2, 2),
    ]);
    assert!(!check_conformance(&g).passed());
    let ids: Vec<_> = g
        .nodes()
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Entity | NodeKind::Event))
        .map(|n| n.id)
        .collect();
    for id in ids {
        g.attach_concept(&Element::Node(id), "thing").unwrap();
    }
    for r in g.relations().into_iter().map(String::from).collect::<Vec<_>>() {
        g.attach_concept(&Element::Relation(r), "link").unwrap();
    }
    let report = check_conformance(&g);
    assert!(report.passed(), "{:?}", report.violations);
}
