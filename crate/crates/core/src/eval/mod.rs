//! Metrics and evaluation harnesses.

mod bert;
mod felm;
mod mcq;
mod qa;

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schema::ConceptRecord;
use crate::text::fold_key;

pub use bert::{bertscore, bertscore_vectors, bs_coverage, bs_recall, TokenEmbeddings};
pub use felm::{balanced_accuracy, evaluate_felm, felm_f1, ConfusionCounts, FelmRecord, Score};
pub use mcq::{
    answer_mcqs, build_answer_prompt, build_generation_prompt, condition_context, generate_mcqs,
    mcq_protocol, parse_letter, parse_mcq_items, Condition, Generated, McqItem, McqScore,
};
pub use qa::{evaluate_qa, exact_match, normalize, pr_at_k, token_f1, QaRecord};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub suite: String,
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
}

impl MetricReport {
    pub fn new(suite: impl Into<String>) -> Self {
        MetricReport {
            suite: suite.into(),
            ..Default::default()
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counts.insert(name.to_string(), value);
    }

    /// Two aligned columns, metrics first.
    pub fn to_text(&self) -> String {
        let width = self
            .metrics
            .keys()
            .chain(self.counts.keys())
            .map(String::len)
            .max()
            .unwrap_or(0);
        let mut out = format!("{}\n", self.suite);
        for (k, v) in &self.metrics {
            out.push_str(&format!("  {k:<width$}  {v:.4}\n"));
        }
        for (k, v) in &self.counts {
            out.push_str(&format!("  {k:<width$}  {v}\n"));
        }
        out
    }
}

/// Gold types for one element in a schema evaluation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaGold {
    pub element: String,
    pub types: Vec<String>,
}

/// Mean per-element BS-R and test-set BS-C of induced concepts against
/// gold types. Elements missing from `concepts`, or with no phrases, are
/// counted and skipped.
pub fn evaluate_schema(
    gold: &[SchemaGold],
    concepts: &[ConceptRecord],
    emb: &mut TokenEmbeddings<'_>,
) -> Result<MetricReport> {
    let by_element: HashMap<String, &ConceptRecord> =
        concepts.iter().map(|c| (fold_key(&c.element), c)).collect();
    let (mut total, mut scored, mut missing) = (0.0, 0u64, 0u64);
    let mut all_truth = Vec::new();
    let mut all_induced = Vec::new();
    for g in gold {
        let Some(rec) = by_element.get(&fold_key(&g.element)).filter(|r| !r.phrases.is_empty()) else {
            missing += 1;
            continue;
        };
        if g.types.is_empty() {
            missing += 1;
            continue;
        }
        total += bs_recall(&g.types, &rec.phrases, emb)?;
        scored += 1;
        all_truth.extend(g.types.iter().cloned());
        all_induced.extend(rec.phrases.iter().cloned());
    }
    let mut report = MetricReport::new("schema");
    report.count("elements", gold.len() as u64);
    report.count("scored", scored);
    report.count("missing", missing);
    if scored > 0 {
        report.metric("bs_r", total / scored as f64);
        report.metric("bs_c", bs_coverage(&all_truth, &all_induced, emb)?);
    }
    Ok(report)
}

const MMLU_SUBJECTS: &str = include_str!("../../resources/mmlu_subjects.json");

fn subject_table() -> &'static HashMap<String, String> {
    static TABLE: OnceLock<HashMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(MMLU_SUBJECTS).expect("bundled subject table is valid");
        raw.into_iter()
            .flat_map(|(subject, tasks)| tasks.into_iter().map(move |t| (t, subject.clone())))
            .collect()
    })
}

/// Subject group of an MMLU task; underscores and spaces are equivalent.
pub fn mmlu_subject(task: &str) -> Option<&'static str> {
    let key = task.trim().to_lowercase().replace('_', " ");
    subject_table().get(&key).map(String::as_str)
}
