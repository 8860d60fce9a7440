use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_concept_prompt, parse_phrases, sample_entity_context, ConceptRecord, ElementKind, InductionConfig};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};
use crate::graph::{Element, KnowledgeGraph, NodeId, NodeKind};
use crate::text::fold_key;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementBatch {
    /// Position among all batches of the slice, before sampling.
    pub index: usize,
    pub kind: ElementKind,
    pub elements: Vec<(Element, String)>,
}

#[derive(Debug, Default)]
pub struct InductionOutcome {
    /// One record per processed element, in batch order.
    pub records: Vec<ConceptRecord>,
    /// Elements that fell back to their kind name as sole concept.
    pub fallbacks: Vec<(ElementKind, String)>,
    pub batches: usize,
    /// Batches taken from the checkpoint instead of the gateway.
    pub resumed: usize,
}

fn elements_of(g: &KnowledgeGraph, kind: ElementKind) -> Vec<(Element, String)> {
    let node_kind = match kind {
        ElementKind::Event => NodeKind::Event,
        ElementKind::Entity => NodeKind::Entity,
        ElementKind::Relation => {
            return g
                .relations()
                .into_iter()
                .map(|r| (Element::Relation(r.to_string()), r.to_string()))
                .collect()
        }
    };
    g.nodes_of_kind(node_kind)
        .map(|n| (Element::Node(n.id), n.text.clone()))
        .collect()
}

/// Batches of the configured slice. Each kind's element list is cut into
/// `slices` contiguous parts; the slice's part is split into batches of
/// `batch_size`, and `sample_batches` of them are kept if set.
pub fn plan_batches(g: &KnowledgeGraph, cfg: &InductionConfig) -> Result<Vec<ElementBatch>> {
    cfg.validate()?;
    let mut batches = Vec::new();
    for kind in ElementKind::ALL {
        let all = elements_of(g, kind);
        let lo = all.len() * cfg.slice / cfg.slices;
        let hi = all.len() * (cfg.slice + 1) / cfg.slices;
        for group in all[lo..hi].chunks(cfg.batch_size) {
            batches.push(ElementBatch {
                index: batches.len(),
                kind,
                elements: group.to_vec(),
            });
        }
    }
    if let Some(n) = cfg.sample_batches {
        if n < batches.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut keep = sample(&mut rng, batches.len(), n).into_vec();
            keep.sort_unstable();
            batches = keep.into_iter().map(|i| batches[i].clone()).collect();
        }
    }
    Ok(batches)
}

#[derive(Serialize, Deserialize)]
struct CheckpointLine {
    slice: usize,
    slices: usize,
    batch: usize,
    records: Vec<ConceptRecord>,
}

fn read_checkpoint(path: &Path, cfg: &InductionConfig) -> Result<BTreeMap<usize, Vec<ConceptRecord>>> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in text.lines().enumerate() {
        match serde_json::from_str::<CheckpointLine>(line) {
            Ok(c) if c.slice == cfg.slice && c.slices == cfg.slices => {
                done.insert(c.batch, c.records);
            }
            Ok(_) => {}
            Err(e) => log::warn!("{}:{}: ignoring checkpoint line: {e}", path.display(), i + 1),
        }
    }
    Ok(done)
}

fn element_rng(seed: u64, kind: ElementKind, text: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(kind.as_str().as_bytes());
    h.update(fold_key(text).as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Prompt context for an entity, trimmed from the end until the whole
/// prompt fits `max_prompt_tokens`.
fn entity_context(g: &KnowledgeGraph, id: NodeId, text: &str, cfg: &InductionConfig, gw: &Gateway) -> String {
    let mut rng = element_rng(cfg.seed, ElementKind::Entity, text);
    let full = sample_entity_context(g, id, cfg.context_neighbors, &mut rng);
    let mut parts: Vec<&str> = if full.is_empty() {
        Vec::new()
    } else {
        full.split(", ").collect()
    };
    loop {
        let ctx = parts.join(", ");
        let prompt = build_concept_prompt(ElementKind::Entity, text, &ctx);
        if parts.is_empty() || gw.token_count(&prompt[0].content) <= cfg.max_prompt_tokens {
            return ctx;
        }
        parts.pop();
    }
}

/// Raw phrases for one element; `None` when the gateway gave up.
fn conceptualize(
    g: &KnowledgeGraph,
    kind: ElementKind,
    element: &Element,
    text: &str,
    cfg: &InductionConfig,
    gw: &Gateway,
) -> (String, Option<Vec<String>>) {
    let context = match (kind, element) {
        (ElementKind::Entity, Element::Node(id)) => entity_context(g, *id, text, cfg, gw),
        _ => String::new(),
    };
    let req = ChatRequest::new(build_concept_prompt(kind, text, &context), cfg.max_new_tokens)
        .with_sampling(cfg.temperature, cfg.top_p);
    match gw.chat(&req) {
        Ok(raw) => (context, Some(parse_phrases(&raw, text))),
        Err(e) => {
            log::warn!("concepts for {kind} {text:?}: {e}");
            (context, None)
        }
    }
}

/// Conceptualizes the configured slice and records the result in `g`.
///
/// Elements left without phrases get their kind name as concept. With a
/// `checkpoint` path, finished batches are appended to it and replayed on a
/// later call instead of being sent again.
pub fn induce_schema(
    g: &mut KnowledgeGraph,
    cfg: &InductionConfig,
    gateway: &Gateway,
    checkpoint: Option<&Path>,
) -> Result<InductionOutcome> {
    let batches = plan_batches(g, cfg)?;
    let mut done = match checkpoint {
        Some(p) => read_checkpoint(p, cfg)?,
        None => BTreeMap::new(),
    };
    let mut log_file = match checkpoint {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::io(p, e))?;
            let tail_ok = fs::read(p)
                .map(|b| b.is_empty() || b.ends_with(b"\n"))
                .unwrap_or(true);
            if !tail_ok {
                writeln!(f).map_err(|e| Error::io(p, e))?;
            }
            Some(f)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.in_flight)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut outcome = InductionOutcome {
        batches: batches.len(),
        ..Default::default()
    };
    for wave in batches.chunks(cfg.in_flight) {
        let fresh: Vec<&ElementBatch> = wave.iter().filter(|b| !done.contains_key(&b.index)).collect();
        let graph: &KnowledgeGraph = g;
        let results: Vec<(usize, Vec<ConceptRecord>)> = pool.install(|| {
            fresh
                .par_iter()
                .map(|b| {
                    let recs = b
                        .elements
                        .par_iter()
                        .map(|(el, text)| {
                            let (context, phrases) = conceptualize(graph, b.kind, el, text, cfg, gateway);
                            ConceptRecord {
                                element: text.clone(),
                                kind: b.kind,
                                phrases: phrases.unwrap_or_default(),
                                context,
                            }
                        })
                        .collect();
                    (b.index, recs)
                })
                .collect()
        });
        for (index, recs) in results {
            if let Some(f) = log_file.as_mut() {
                let line = serde_json::to_string(&CheckpointLine {
                    slice: cfg.slice,
                    slices: cfg.slices,
                    batch: index,
                    records: recs.clone(),
                })?;
                writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| {
                    Error::io(checkpoint.unwrap_or(Path::new("checkpoint")), e)
                })?;
            }
            done.insert(index, recs);
        }
        for batch in wave {
            let recs = done
                .remove(&batch.index)
                .expect("every batch of the wave is resolved");
            if !fresh.iter().any(|b| b.index == batch.index) {
                outcome.resumed += 1;
            }
            apply(g, batch, recs, &mut outcome)?;
        }
    }
    Ok(outcome)
}

fn apply(
    g: &mut KnowledgeGraph,
    batch: &ElementBatch,
    recs: Vec<ConceptRecord>,
    outcome: &mut InductionOutcome,
) -> Result<()> {
    if recs.len() != batch.elements.len() {
        return Err(Error::Format(format!(
            "checkpoint batch {} has {} records for {} elements",
            batch.index,
            recs.len(),
            batch.elements.len()
        )));
    }
    for ((element, text), mut rec) in batch.elements.iter().zip(recs) {
        if rec.phrases.is_empty() {
            let fallback = batch.kind.as_str();
            g.attach_concept(element, fallback)?;
            if fold_key(text) != fallback {
                rec.phrases.push(fallback.to_string());
            }
            outcome.fallbacks.push((batch.kind, text.clone()));
        } else {
            for p in &rec.phrases {
                g.attach_concept(element, p)?;
            }
        }
        outcome.records.push(rec);
    }
    Ok(())
}
