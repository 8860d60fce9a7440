//! Knowledge-graph construction from text and graph-based retrieval.
pub mod config;
pub mod error;
pub mod eval;
pub mod extract;
pub mod gateway;
pub mod graph;
pub mod index;
pub mod prompts;
pub mod retrieval;
pub mod schema;
pub mod text;

pub use config::Config;
pub use error::{Error, Result};
pub use gateway::{ChatRequest, EmbeddingVector, Gateway, GatewayError, Message};
pub use graph::{Edge, EdgeKind, Element, GraphVariant, KnowledgeGraph, Node, NodeId, NodeKind};
pub use index::{GraphIndexes, VectorIndex};
pub use retrieval::{Method, RetrievalResult};
