use std::path::Path;

use super::{ConceptRecord, ElementKind};
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["element", "kind", "phrases", "context"];

/// Joins phrases with `;`, escaping `;` and `\` inside phrases.
fn join_phrases(phrases: &[String]) -> String {
    phrases
        .iter()
        .map(|p| p.replace('\\', "\\\\").replace(';', "\\;"))
        .collect::<Vec<_>>()
        .join(";")
}

fn split_phrases(field: &str) -> Vec<String> {
    if field.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => cur.extend(chars.next()),
            ';' => out.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn write_concept_csv<'a>(
    records: impl IntoIterator<Item = &'a ConceptRecord>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.element.as_str(),
            r.kind.as_str(),
            &join_phrases(&r.phrases),
            r.context.as_str(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_concept_csv(path: impl AsRef<Path>) -> Result<Vec<ConceptRecord>> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err)?;
        if row.len() != HEADER.len() {
            return Err(Error::Format(format!("{}: expected 4 columns", path.display())));
        }
        out.push(ConceptRecord {
            element: row[0].to_string(),
            kind: row[1].parse::<ElementKind>()?,
            phrases: split_phrases(&row[2]),
            context: row[3].to_string(),
        });
    }
    Ok(out)
}
