//! Binary graph file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "KGFGRAPH"
//! version    u32
//! section*   tag: u8, length: u64, payload   (tags 1..=5 in order)
//! checksum   32 bytes SHA-256 over every preceding byte
//! ```
//!
//! Sections: 1 nodes, 2 edges, 3 phi, 4 psi, 5 passages. Strings are a u32
//! byte length followed by UTF-8; node ids are u128.
//!
//! * nodes: u64 count, then `id kind:u8 text refs:u32 ref*`
//! * edges: u64 count, then `head relation tail kind:u8 prov_tag:u8 [passage]`
//! * phi: u64 count, then `node n:u32 concept*`
//! * psi: u64 count, then `relation n:u32 concept*`
//! * passages: u64 count, then `id text`

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Edge, EdgeKind, KnowledgeGraph, Node, NodeId, NodeKind, Provenance};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KGFGRAPH";
pub const FORMAT_VERSION: u32 = 1;

const SEC_NODES: u8 = 1;
const SEC_EDGES: u8 = 2;
const SEC_PHI: u8 = 3;
const SEC_PSI: u8 = 4;
const SEC_PASSAGES: u8 = 5;

#[derive(Default)]
pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: u8, payload: Writer) {
        self.u8(tag);
        self.u64(payload.buf.len() as u64);
        self.buf.extend_from_slice(&payload.buf);
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format("invalid utf-8 string".into()))
    }
    pub(crate) fn count(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // every record takes at least one byte
        if n as usize > self.data.len() - self.pos {
            return Err(Error::Format(format!("implausible record count {n}")));
        }
        Ok(n as usize)
    }
    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }
    fn section(&mut self, tag: u8) -> Result<Reader<'a>> {
        let found = self.u8()?;
        if found != tag {
            return Err(Error::Format(format!("expected section {tag}, found {found}")));
        }
        let len = self.u64()? as usize;
        Ok(Reader::new(self.take(len)?))
    }
    fn node_id(&mut self) -> Result<NodeId> {
        let raw = self.u128()?;
        NodeId::from_raw(raw).ok_or_else(|| Error::Format(format!("invalid node id {raw:#x}")))
    }
}

/// Splits off and verifies the SHA-256 trailer, returning the body.
pub(crate) fn verify_checksum(data: &[u8]) -> Result<&[u8]> {
    if data.len() < 32 {
        return Err(Error::Format("file too short".into()));
    }
    let (body, sum) = data.split_at(data.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Format("checksum mismatch (corrupt or truncated file)".into()));
    }
    Ok(body)
}

pub(crate) fn append_checksum(mut buf: Vec<u8>) -> Vec<u8> {
    let sum = Sha256::digest(&buf);
    buf.extend_from_slice(sum.as_slice());
    buf
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_graph(g: &KnowledgeGraph) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);

    let mut s = Writer::default();
    s.u64(g.nodes.len() as u64);
    for n in &g.nodes {
        s.u128(n.id.as_u128());
        s.u8(n.kind.tag());
        s.str(&n.text);
        s.u32(n.source_refs.len() as u32);
        for r in &n.source_refs {
            s.str(r);
        }
    }
    w.section(SEC_NODES, s);

    let mut s = Writer::default();
    s.u64(g.edges.len() as u64);
    for e in &g.edges {
        s.u128(e.head.as_u128());
        s.str(&e.relation);
        s.u128(e.tail.as_u128());
        s.u8(e.kind.tag());
        match &e.provenance {
            Provenance::Induced => s.u8(0),
            Provenance::Passage(p) => {
                s.u8(1);
                s.str(p);
            }
        }
    }
    w.section(SEC_EDGES, s);

    let mut s = Writer::default();
    s.u64(g.phi.len() as u64);
    for (node, concepts) in &g.phi {
        s.u128(node.as_u128());
        s.u32(concepts.len() as u32);
        for c in concepts {
            s.u128(c.as_u128());
        }
    }
    w.section(SEC_PHI, s);

    let mut s = Writer::default();
    s.u64(g.psi.len() as u64);
    for (rel, concepts) in &g.psi {
        s.str(rel);
        s.u32(concepts.len() as u32);
        for c in concepts {
            s.u128(c.as_u128());
        }
    }
    w.section(SEC_PSI, s);

    let mut s = Writer::default();
    s.u64(g.passages.len() as u64);
    for (id, text) in &g.passages {
        s.str(id);
        s.str(text);
    }
    w.section(SEC_PASSAGES, s);

    append_checksum(w.buf)
}

pub fn read_graph(data: &[u8]) -> Result<KnowledgeGraph> {
    let body = verify_checksum(data)?;
    let mut r = Reader::new(body);
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a graph file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }

    let mut s = r.section(SEC_NODES)?;
    let n = s.count()?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let id = s.node_id()?;
        let kind = NodeKind::from_tag(s.u8()?).ok_or_else(|| Error::Format("bad node kind".into()))?;
        let text = s.str()?;
        let nrefs = s.u32()? as usize;
        let mut source_refs = Vec::with_capacity(nrefs.min(1024));
        for _ in 0..nrefs {
            source_refs.push(s.str()?);
        }
        nodes.push(Node {
            id,
            kind,
            text,
            source_refs,
        });
    }

    let mut s = r.section(SEC_EDGES)?;
    let n = s.count()?;
    let mut edges = Vec::with_capacity(n);
    for _ in 0..n {
        let head = s.node_id()?;
        let relation = s.str()?;
        let tail = s.node_id()?;
        let kind = EdgeKind::from_tag(s.u8()?).ok_or_else(|| Error::Format("bad edge kind".into()))?;
        let provenance = match s.u8()? {
            0 => Provenance::Induced,
            1 => Provenance::Passage(s.str()?),
            t => return Err(Error::Format(format!("bad provenance tag {t}"))),
        };
        edges.push(Edge {
            head,
            relation,
            tail,
            kind,
            provenance,
        });
    }

    let mut s = r.section(SEC_PHI)?;
    let n = s.count()?;
    let mut phi = BTreeMap::new();
    for _ in 0..n {
        let node = s.node_id()?;
        let k = s.u32()? as usize;
        let mut set = BTreeSet::new();
        for _ in 0..k {
            set.insert(s.node_id()?);
        }
        phi.insert(node, set);
    }

    let mut s = r.section(SEC_PSI)?;
    let n = s.count()?;
    let mut psi = BTreeMap::new();
    for _ in 0..n {
        let rel = s.str()?;
        let k = s.u32()? as usize;
        let mut set = BTreeSet::new();
        for _ in 0..k {
            set.insert(s.node_id()?);
        }
        psi.insert(rel, set);
    }

    let mut s = r.section(SEC_PASSAGES)?;
    let n = s.count()?;
    let mut passages = BTreeMap::new();
    for _ in 0..n {
        let id = s.str()?;
        let text = s.str()?;
        passages.insert(id, text);
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after last section".into()));
    }

    KnowledgeGraph::from_parts(nodes, edges, phi, psi, passages)
}

pub fn save(g: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    write_atomically(path.as_ref(), &write_graph(g))
}

pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_graph(&data)
}
