use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// One corpus line: `{"id", "text", "metadata": {"language", "source"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: DocMetadata,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            metadata: DocMetadata::default(),
        }
    }

    pub fn with_language(mut self, lang: &str) -> Self {
        self.metadata.language = Some(lang.to_string());
        self
    }

    /// English when tagged so, or when the document carries no language tag.
    pub fn is_english(&self) -> bool {
        match self.metadata.language.as_deref().map(str::trim) {
            None | Some("") => true,
            Some(tag) => {
                let tag = tag.to_ascii_lowercase();
                tag == "en"
                    || tag == "eng"
                    || tag == "english"
                    || tag.starts_with("en-")
                    || tag.starts_with("en_")
            }
        }
    }
}

/// Keeps English and untagged documents, preserving order.
pub fn filter_corpus<I>(docs: I) -> impl Iterator<Item = Document>
where
    I: IntoIterator<Item = Document>,
{
    docs.into_iter().filter(Document::is_english)
}

/// Reads a JSON-lines corpus. Blank lines are skipped; a malformed line is
/// an error naming the line.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_english_and_untagged() {
        let docs = vec![
            Document::new("a", "x").with_language("en"),
            Document::new("b", "x").with_language("de"),
            Document::new("c", "x"),
        ];
        let ids: Vec<String> = filter_corpus(docs).map(|d| d.id).collect();
        assert_eq!(ids, ["a", "c"]);
    }

    #[test]
    fn empty_and_order() {
        assert_eq!(filter_corpus(Vec::new()).count(), 0);
        let docs: Vec<Document> = (0..5)
            .map(|i| Document::new(i.to_string(), "t").with_language("en-US"))
            .collect();
        let kept: Vec<Document> = filter_corpus(docs.clone()).collect();
        assert_eq!(kept, docs);
    }

    #[test]
    fn reads_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"1\",\"text\":\"a\",\"metadata\":{\"language\":\"en\"}}\n\n{\"id\":\"2\",\"text\":\"b\"}\n",
        )
        .unwrap();
        let docs = read_corpus(&p).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].metadata.language.as_deref(), Some("en"));
        std::fs::write(&p, "{oops\n").unwrap();
        let err = read_corpus(&p).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }
}
