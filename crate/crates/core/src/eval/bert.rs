use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::gateway::{EmbeddingVector, Gateway};

fn greedy_mean(from: &[EmbeddingVector], to: &[EmbeddingVector]) -> f64 {
    from.iter()
        .map(|x| to.iter().map(|y| x.dot(y)).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / from.len() as f64
}

/// BERTScore F1 between two sequences of token embeddings: the harmonic
/// mean of greedy-matched recall (over `truth`) and precision (over
/// `induced`). Zero when either side is not positive, since the harmonic
/// mean of mixed-sign values is meaningless.
pub fn bertscore_vectors(truth: &[EmbeddingVector], induced: &[EmbeddingVector]) -> Result<f64> {
    if truth.is_empty() || induced.is_empty() {
        return Err(Error::EmptySequence);
    }
    let recall = greedy_mean(truth, induced);
    let precision = greedy_mean(induced, truth);
    if recall <= 0.0 || precision <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * recall * precision / (recall + precision))
}

/// Embeds tokens once each and remembers them.
pub struct TokenEmbeddings<'a> {
    gateway: &'a Gateway,
    cache: HashMap<String, EmbeddingVector>,
}

impl<'a> TokenEmbeddings<'a> {
    pub fn new(gateway: &'a Gateway) -> Self {
        TokenEmbeddings {
            gateway,
            cache: HashMap::new(),
        }
    }

    fn tokens(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    /// Embeddings of the whitespace tokens of `text`.
    pub fn of(&mut self, text: &str) -> Result<Vec<EmbeddingVector>> {
        let toks = Self::tokens(text);
        let missing: Vec<String> = toks
            .iter()
            .filter(|t| !self.cache.contains_key(*t))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if !missing.is_empty() {
            let vecs = self.gateway.embed(&missing)?;
            self.cache.extend(missing.into_iter().zip(vecs));
        }
        Ok(toks.iter().map(|t| self.cache[t].clone()).collect())
    }
}

pub fn bertscore(truth: &str, induced: &str, emb: &mut TokenEmbeddings<'_>) -> Result<f64> {
    let t = emb.of(truth)?;
    let h = emb.of(induced)?;
    bertscore_vectors(&t, &h)
}

fn distinct(items: &[String]) -> Vec<&str> {
    let set: BTreeSet<&str> = items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    set.into_iter().collect()
}

/// Mean over induced phrases of the best score against any true type.
/// Both sides are treated as sets.
pub fn bs_recall(truth: &[String], induced: &[String], emb: &mut TokenEmbeddings<'_>) -> Result<f64> {
    let truth = distinct(truth);
    let induced = distinct(induced);
    if truth.is_empty() || induced.is_empty() {
        return Err(Error::EmptySet);
    }
    let truth_vecs = truth.iter().map(|t| emb.of(t)).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for h in &induced {
        let hv = emb.of(h)?;
        let mut best = f64::NEG_INFINITY;
        for tv in &truth_vecs {
            best = best.max(bertscore_vectors(tv, &hv)?);
        }
        total += best;
    }
    Ok(total / induced.len() as f64)
}

/// The same score over the union of all types and all induced phrases of
/// a test set.
pub fn bs_coverage(
    all_truth: &[String],
    all_induced: &[String],
    emb: &mut TokenEmbeddings<'_>,
) -> Result<f64> {
    bs_recall(all_truth, all_induced, emb)
}
