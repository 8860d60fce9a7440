use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricReport;
use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercased tokens with punctuation deleted and articles dropped.
pub fn normalize(answer: &str) -> Vec<String> {
    let cleaned: String = answer
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_string)
        .collect()
}

pub fn exact_match(answer: &str, gold: &str) -> f64 {
    if normalize(answer) == normalize(gold) {
        1.0
    } else {
        0.0
    }
}

/// Token-overlap F1 with duplicates counted.
pub fn token_f1(answer: &str, gold: &str) -> f64 {
    let a = normalize(answer);
    let g = normalize(gold);
    match (a.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &a {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / a.len() as f64;
    let r = common as f64 / g.len() as f64;
    2.0 * p * r / (p + r)
}

/// Fraction of `supporting` found among the first `k` retrieved ids.
pub fn pr_at_k(retrieved: &[String], supporting: &[String], k: usize) -> Result<f64> {
    let support: HashSet<&str> = supporting.iter().map(String::as_str).collect();
    if support.is_empty() {
        return Err(Error::EmptySet);
    }
    let top: HashSet<&str> = retrieved.iter().take(k).map(String::as_str).collect();
    Ok(support.intersection(&top).count() as f64 / support.len() as f64)
}

/// One line of a QA evaluation file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct QaRecord {
    pub id: Option<String>,
    pub question: String,
    pub answers: Vec<String>,
    pub prediction: Option<String>,
    pub supporting: Vec<String>,
    pub retrieved: Vec<String>,
}

/// Mean EM and F1 (best over gold answers) plus PR@2 and PR@5 over
/// records that list supporting passages.
pub fn evaluate_qa(records: &[QaRecord]) -> MetricReport {
    let mut report = MetricReport::new("qa");
    let (mut em, mut f1, mut answered) = (0.0, 0.0, 0u64);
    let (mut pr2, mut pr5, mut with_support) = (0.0, 0.0, 0u64);
    for r in records {
        if let Some(pred) = &r.prediction {
            if !r.answers.is_empty() {
                answered += 1;
                em += r.answers.iter().map(|g| exact_match(pred, g)).fold(0.0, f64::max);
                f1 += r.answers.iter().map(|g| token_f1(pred, g)).fold(0.0, f64::max);
            }
        }
        if let (Ok(a), Ok(b)) = (pr_at_k(&r.retrieved, &r.supporting, 2), pr_at_k(&r.retrieved, &r.supporting, 5)) {
            with_support += 1;
            pr2 += a;
            pr5 += b;
        }
    }
    report.count("records", records.len() as u64);
    report.count("answered", answered);
    report.count("with_support", with_support);
    if answered > 0 {
        report.metric("em", em / answered as f64);
        report.metric("f1", f1 / answered as f64);
    }
    if with_support > 0 {
        report.metric("pr@2", pr2 / with_support as f64);
        report.metric("pr@5", pr5 / with_support as f64);
    }
    report
}
