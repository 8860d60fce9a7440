//! Fixtures and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use kgforge::extract::pipeline::{BatchSink, DirSink, MemorySink};
use kgforge::extract::{build_graph, read_corpus, run_extraction, Document, PipelineConfig, TextChunk};
use kgforge::gateway::mock::MockChat;
use kgforge::gateway::Role;
use kgforge::graph::{EdgeKind, KnowledgeGraph};
use kgforge::retrieval::Adjacency;
use kgforge::schema::{induce_schema, InductionConfig};
use kgforge::{Gateway, Message};
use rand::Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_corpus() -> Vec<Document> {
    read_corpus(fixtures().join("corpus20.jsonl")).expect("fixture corpus parses")
}

pub fn mock() -> Gateway {
    Gateway::mock(MockChat::standard())
}

/// Extraction, assembly and (optionally) induction with default settings.
/// Batch files go under `dir` when given.
pub fn build_kg(docs: Vec<Document>, gw: &Gateway, dir: Option<&Path>, induce: bool) -> KnowledgeGraph {
    let cfg = PipelineConfig::default();
    let mut dir_sink;
    let mut mem_sink = MemorySink;
    let sink: &mut dyn BatchSink = match dir {
        Some(d) => {
            dir_sink = DirSink::new(d);
            &mut dir_sink
        }
        None => &mut mem_sink,
    };
    let outcome = run_extraction(docs, &cfg, gw, sink).expect("extraction runs");
    let (mut g, _) = build_graph(&outcome.batches).expect("assembly succeeds");
    if induce {
        induce_schema(&mut g, &InductionConfig::default(), gw, None).expect("induction runs");
    }
    g
}

// ---- prompts ----

pub fn render(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(&format!("<<{role}>>\n{}\n", m.content));
    }
    out
}

/// Assembled prompts for fixed inputs, by golden file stem.
pub fn golden_cases() -> Vec<(&'static str, Vec<Message>)> {
    use kgforge::eval::{build_answer_prompt, build_generation_prompt, McqItem};
    use kgforge::extract::{build_stage_prompt, Stage};
    use kgforge::schema::{build_concept_prompt, ElementKind};

    let passage = "Black Mountain College was started by John Andrew Rice in 1933.";
    let chunk = TextChunk::new("doc", 0, passage.to_string(), 11, Default::default());
    let item = McqItem {
        question: "Who started Black Mountain College?".into(),
        options: [
            "John Andrew Rice".into(),
            "Josef Albers".into(),
            "Buckminster Fuller".into(),
            "John Cage".into(),
        ],
        answer: 'A',
        source: "doc#0".into(),
    };
    vec![
        ("entity_relation", build_stage_prompt(Stage::EntityRelation, &chunk)),
        ("event_entity", build_stage_prompt(Stage::EventEntity, &chunk)),
        ("event_relation", build_stage_prompt(Stage::EventRelation, &chunk)),
        (
            "concept_event",
            build_concept_prompt(ElementKind::Event, "John Andrew Rice started Black Mountain College", ""),
        ),
        (
            "concept_entity",
            build_concept_prompt(
                ElementKind::Entity,
                "Black Mountain College",
                "was started by John Andrew Rice",
            ),
        ),
        ("concept_relation", build_concept_prompt(ElementKind::Relation, "was started by", "")),
        ("mcq_generate", build_generation_prompt(passage)),
        ("mcq_answer", build_answer_prompt(&item, passage)),
    ]
}

// ---- reference implementations ----

pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> Adjacency {
    let mut neighbors = vec![Vec::new(); n];
    for &(a, b) in edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    Adjacency { neighbors }
}

/// Personalized PageRank by solving `(I - d M) x = (1 - d) p` directly,
/// where column `u` of `M` spreads evenly over u's edge endpoints and
/// isolated columns equal `p`.
pub fn dense_ppr(n: usize, edges: &[(usize, usize)], personalization: &[f64], damping: f64) -> Vec<f64> {
    let total: f64 = personalization.iter().sum();
    let p: Vec<f64> = personalization.iter().map(|v| v / total).collect();
    let mut deg = vec![0.0; n];
    for &(a, b) in edges {
        deg[a] += 1.0;
        deg[b] += 1.0;
    }
    let mut m = vec![vec![0.0; n]; n];
    for &(a, b) in edges {
        m[b][a] += 1.0 / deg[a];
        m[a][b] += 1.0 / deg[b];
    }
    for u in 0..n {
        if deg[u] == 0.0 {
            for v in 0..n {
                m[v][u] = p[v];
            }
        }
    }
    // augmented system
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| if i == j { 1.0 } else { 0.0 } - damping * m[i][j])
                .collect();
            row.push((1.0 - damping) * p[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let lead = a[col][col];
        for j in col..=n {
            a[col][j] /= lead;
        }
        for i in 0..n {
            if i != col && a[i][col] != 0.0 {
                let f = a[i][col];
                for j in col..=n {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n]).collect()
}

/// Every row scored, sorted by descending score then ascending id.
pub fn brute_top_k(ids: &[String], rows: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = ids
        .iter()
        .zip(rows)
        .map(|(id, r)| {
            let mut s = 0.0;
            for i in 0..q.len() {
                s += r[i] * q[i];
            }
            (id.clone(), s)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

// ---- synthetic corpora ----

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
/// Lowercase words of the corpus templates; generated names must avoid them.
const RESERVED: &[&str] = &[
    "home", "city", "person", "which", "founded", "hails", "from", "collects", "met", "the", "who", "is",
    "to", "was", "by",
];

/// Fresh capitalized words, none repeated.
pub struct NameGen<R> {
    rng: R,
    used: HashSet<String>,
}

impl<R: Rng> NameGen<R> {
    pub fn new(rng: R) -> Self {
        NameGen {
            rng,
            used: HashSet::new(),
        }
    }

    pub fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[self.rng.random_range(0..VOWELS.len())] as char);
            }
            if self.rng.random_bool(0.5) {
                w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
            }
            if RESERVED.contains(&w.as_str()) || !self.used.insert(w.clone()) {
                continue;
            }
            let mut c = w.chars();
            let first = c.next().unwrap().to_ascii_uppercase();
            return format!("{first}{}", c.as_str());
        }
    }

    /// Two fresh words.
    pub fn name(&mut self) -> String {
        format!("{} {}", self.word(), self.word())
    }
}

pub struct PlantedQuestion {
    pub question: String,
    /// Chunk ids of the two passages the answer needs.
    pub supporting: Vec<String>,
    pub company: String,
    pub person: String,
    pub city: String,
}

pub struct MultiHopCorpus {
    pub docs: Vec<Document>,
    pub questions: Vec<PlantedQuestion>,
}

/// `questions` two-passage chains, company -> founder -> home city, plus
/// unrelated passages up to `passages` in total.
pub fn multihop_corpus<R: Rng>(rng: R, questions: usize, passages: usize) -> MultiHopCorpus {
    let mut names = NameGen::new(rng);
    let mut docs = Vec::new();
    let mut planted = Vec::new();
    for i in 0..questions {
        let (company, person, city) = (names.name(), names.name(), names.name());
        let a = format!("a{i:03}");
        let b = format!("b{i:03}");
        docs.push(Document::new(&a, format!("{company} was founded by {person}.")));
        docs.push(Document::new(&b, format!("{person} hails from {city}.")));
        planted.push(PlantedQuestion {
            question: format!("Which city is home to the person who founded {company}?"),
            supporting: vec![format!("{a}#0"), format!("{b}#0")],
            company,
            person,
            city,
        });
    }
    let mut i = 0;
    while docs.len() < passages {
        let (x, y) = (names.name(), names.name());
        docs.push(Document::new(format!("x{i:03}"), format!("{x} collects {y}.")));
        i += 1;
    }
    MultiHopCorpus {
        docs,
        questions: planted,
    }
}

/// Passages of five two-entity sentences each.
pub fn mcq_corpus<R: Rng>(rng: R, passages: usize) -> Vec<(String, String)> {
    let mut names = NameGen::new(rng);
    (0..passages)
        .map(|i| {
            let text: Vec<String> = (0..5)
                .map(|_| format!("{} met {}.", names.name(), names.name()))
                .collect();
            (format!("m{i:03}"), text.join(" "))
        })
        .collect()
}

/// A graph of `entities` entities over `passages` passages: `edges` random
/// entity-entity facts, each endpoint mentioned in the fact's passage.
pub fn random_kg<R: Rng>(rng: &mut R, passages: usize, entities: usize, edges: usize) -> (KnowledgeGraph, Vec<String>) {
    let mut names = NameGen::new(&mut *rng);
    let ents: Vec<String> = (0..entities).map(|_| names.name()).collect();
    let mut g = KnowledgeGraph::new();
    for p in 0..passages {
        g.add_passage(&format!("p{p:03}"), &format!("passage {p}")).unwrap();
    }
    let relations = ["knows", "funds", "visited", "employs"];
    for _ in 0..edges {
        let a = rng.random_range(0..entities);
        let mut b = rng.random_range(0..entities);
        if b == a {
            b = (a + 1) % entities;
        }
        let pid = format!("p{:03}", rng.random_range(0..passages));
        let r = relations[rng.random_range(0..relations.len())];
        let (h, t) = g.add_triple(&ents[a], r, &ents[b], EdgeKind::EntityEntity, &pid).unwrap();
        g.add_mention(h, &pid).unwrap();
        g.add_mention(t, &pid).unwrap();
    }
    (g, ents)
}
