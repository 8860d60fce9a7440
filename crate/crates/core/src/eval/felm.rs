use serde::{Deserialize, Serialize};

use super::MetricReport;
use crate::error::{Error, Result};

/// Segment-level confusion counts, the positive class being a factually
/// correct segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// A metric value plus whether some ratio in it had a zero denominator
/// and was taken as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Mean of the two class recalls. With `printed_sum` the recalls are added
/// without halving, which ranges over [0, 2].
pub fn balanced_accuracy(c: ConfusionCounts, printed_sum: bool) -> Result<Score> {
    if c.total() == 0 {
        return Err(Error::UndefinedMetric("balanced accuracy of empty counts"));
    }
    let mut degenerate = false;
    let sum = ratio(c.tp, c.tp + c.fn_, &mut degenerate) + ratio(c.tn, c.tn + c.fp, &mut degenerate);
    let value = if printed_sum { sum } else { 0.5 * sum };
    Ok(Score { value, degenerate })
}

/// F1 for detecting false segments: precision TN/(TN+FN), recall TN/(TN+FP).
pub fn felm_f1(c: ConfusionCounts) -> Result<Score> {
    if c.total() == 0 {
        return Err(Error::UndefinedMetric("F1 of empty counts"));
    }
    let mut degenerate = false;
    let p = ratio(c.tn, c.tn + c.fn_, &mut degenerate);
    let r = ratio(c.tn, c.tn + c.fp, &mut degenerate);
    let value = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok(Score { value, degenerate })
}

/// One response: per-segment truth labels and the segment ids the model
/// flagged as false.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FelmRecord {
    pub id: Option<String>,
    pub labels: Vec<bool>,
    pub predicted_false: Vec<usize>,
}

impl FelmRecord {
    pub fn counts(&self) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (i, &truth) in self.labels.iter().enumerate() {
            let flagged = self.predicted_false.contains(&i);
            match (truth, flagged) {
                (true, false) => c.tp += 1,
                (true, true) => c.fn_ += 1,
                (false, true) => c.tn += 1,
                (false, false) => c.fp += 1,
            }
        }
        c
    }
}

pub fn evaluate_felm(records: &[FelmRecord], printed_sum: bool) -> Result<MetricReport> {
    let mut c = ConfusionCounts::default();
    for r in records {
        c.add(r.counts());
    }
    let mut report = MetricReport::new("felm");
    let acc = balanced_accuracy(c, printed_sum)?;
    let f1 = felm_f1(c)?;
    report.metric("balanced_accuracy", acc.value);
    report.metric("f1", f1.value);
    report.count("tp", c.tp);
    report.count("fp", c.fp);
    report.count("tn", c.tn);
    report.count("fn", c.fn_);
    report.count("degenerate", u64::from(acc.degenerate || f1.degenerate));
    Ok(report)
}
