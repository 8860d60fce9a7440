//! Exact dot-product search over unit vectors.
//!
//! File layout (little-endian): magic `KGFINDEX`, `u32` version, `u32`
//! dimension, `u64` row count, then per row a `u32`-length-prefixed UTF-8
//! id, then the row-major `f64` vector block, then a SHA-256 of everything
//! before it.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gateway::{EmbeddingVector, Gateway};
use crate::graph::persist::{append_checksum, verify_checksum, write_atomically, Reader, Writer};
use crate::graph::{KnowledgeGraph, NodeKind};

const MAGIC: &[u8; 8] = b"KGFINDEX";
pub const INDEX_VERSION: u32 = 1;
/// Texts per embedding request when building from a gateway.
const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorIndex {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

/// Descending score, then ascending id.
fn rank(a: &(usize, f64), b: &(usize, f64), ids: &[String]) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| ids[a.0].cmp(&ids[b.0]))
}

impl VectorIndex {
    pub fn build(items: Vec<(String, EmbeddingVector)>) -> Result<Self> {
        let dim = items.first().map_or(0, |(_, v)| v.dim());
        let mut seen = HashSet::with_capacity(items.len());
        let mut ids = Vec::with_capacity(items.len());
        let mut data = Vec::with_capacity(items.len() * dim);
        for (id, v) in items {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
            data.extend_from_slice(v.as_slice());
        }
        Ok(VectorIndex { ids, dim, data })
    }

    /// Embeds `(id, text)` pairs through `gateway` and indexes them.
    pub fn embed(gateway: &Gateway, items: Vec<(String, String)>) -> Result<Self> {
        let mut rows = Vec::with_capacity(items.len());
        for group in items.chunks(EMBED_BATCH) {
            let texts: Vec<String> = group.iter().map(|(_, t)| t.clone()).collect();
            let vecs = gateway.embed(&texts)?;
            rows.extend(group.iter().map(|(id, _)| id.clone()).zip(vecs));
        }
        Self::build(rows)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn check_dim(&self, query: &EmbeddingVector) -> Result<()> {
        if !self.is_empty() && query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        Ok(())
    }

    /// Dot product of `query` with every row, in row order.
    pub fn scores(&self, query: &EmbeddingVector) -> Result<Vec<f64>> {
        self.check_dim(query)?;
        let q = query.as_slice();
        Ok((0..self.len())
            .map(|i| self.row(i).iter().zip(q).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// The `k` best rows by dot product; ties go to the smaller id.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>> {
        let scores = self.scores(query)?;
        let mut scored: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        let k = k.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| rank(a, b, &self.ids));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| rank(a, b, &self.ids));
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.ids[i].clone(), s))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(INDEX_VERSION);
        w.u32(self.dim as u32);
        w.u64(self.ids.len() as u64);
        for id in &self.ids {
            w.str(id);
        }
        for v in &self.data {
            w.f64(*v);
        }
        append_checksum(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let body = verify_checksum(data)?;
        let mut r = Reader::new(body);
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not an index file".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::Version {
                expected: INDEX_VERSION,
                found: version,
            });
        }
        let dim = r.u32()? as usize;
        let n = r.count()?;
        let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let cells = n
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("index size overflows".into()))?;
        let data = (0..cells).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after index".into()));
        }
        if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
            return Err(Error::Format("duplicate id in index".into()));
        }
        Ok(VectorIndex { ids, dim, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomically(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// Index id of the edge at position `pos` of a graph's edge list.
pub fn edge_key(pos: usize) -> String {
    format!("edge:{pos:012}")
}

pub fn parse_edge_key(key: &str) -> Option<usize> {
    key.strip_prefix("edge:")?.parse().ok()
}

/// Text embedded for a fact edge.
pub fn edge_text(g: &KnowledgeGraph, pos: usize) -> String {
    let e = &g.edges()[pos];
    let text = |id| g.node(id).map_or("", |n| n.text.as_str());
    format!("{} {} {}", text(e.head), e.relation, text(e.tail))
}

/// The three indexes retrieval needs over one graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphIndexes {
    /// Entity, event and concept nodes, keyed by hex node id.
    pub nodes: VectorIndex,
    /// Fact edges, keyed by [`edge_key`].
    pub edges: VectorIndex,
    /// Passages, keyed by passage id.
    pub passages: VectorIndex,
}

impl GraphIndexes {
    pub fn build(g: &KnowledgeGraph, gateway: &Gateway) -> Result<Self> {
        let nodes = g
            .nodes()
            .iter()
            .filter(|n| n.kind != NodeKind::Passage)
            .map(|n| (n.id.to_hex(), n.text.clone()))
            .collect();
        let edges = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind.is_fact())
            .map(|(i, _)| (edge_key(i), edge_text(g, i)))
            .collect();
        let passages = g
            .passages()
            .iter()
            .map(|(id, text)| (id.clone(), text.clone()))
            .collect();
        Ok(GraphIndexes {
            nodes: VectorIndex::embed(gateway, nodes)?,
            edges: VectorIndex::embed(gateway, edges)?,
            passages: VectorIndex::embed(gateway, passages)?,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.nodes.save(dir.join("nodes.idx"))?;
        self.edges.save(dir.join("edges.idx"))?;
        self.passages.save(dir.join("passages.idx"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(GraphIndexes {
            nodes: VectorIndex::load(dir.join("nodes.idx"))?,
            edges: VectorIndex::load(dir.join("edges.idx"))?,
            passages: VectorIndex::load(dir.join("passages.idx"))?,
        })
    }
}
