use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::chain_model::NodeId;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit {
    pub situation: NodeId,
    pub score: f64,
}

/// TF-IDF index over situation texts.
///
/// Weights are `tf * idf` with raw term counts and `idf = 1 + ln(N / df)`;
/// query terms unseen in the corpus count with `df = 1`.
#[derive(Debug, Clone, Default)]
pub struct TfIdfIndex {
    docs: BTreeMap<NodeId, BTreeMap<String, u32>>,
    df: HashMap<String, u32>,
}

impl TfIdfIndex {
    pub fn insert(&mut self, id: NodeId, text: &str) {
        if self.docs.contains_key(&id) {
            return;
        }
        let tf = term_counts(text);
        for term in tf.keys() {
            *self.df.entry(term.clone()).or_insert(0) += 1;
        }
        self.docs.insert(id, tf);
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0).max(1) as f64;
        1.0 + (n / df).ln()
    }

    fn weigh(&self, tf: &BTreeMap<String, u32>) -> BTreeMap<String, f64> {
        tf.iter()
            .map(|(term, count)| (term.clone(), *count as f64 * self.idf(term)))
            .collect()
    }

    /// Cosine similarity of `query` against every stored situation, best first,
    /// ties broken by situation id.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<SimilarityHit> {
        let q = self.weigh(&term_counts(query));
        let q_norm: f64 = q.values().map(|w| w * w).sum();
        let mut hits: Vec<SimilarityHit> = self
            .docs
            .iter()
            .map(|(id, tf)| {
                let d = self.weigh(tf);
                SimilarityHit {
                    situation: id.clone(),
                    score: cosine(&q, q_norm, &d),
                }
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.situation.cmp(&b.situation))
        });
        hits.truncate(k);
        hits
    }
}

fn term_counts(text: &str) -> BTreeMap<String, u32> {
    let mut tf = BTreeMap::new();
    for token in tokenize(text) {
        *tf.entry(token).or_insert(0) += 1;
    }
    tf
}

fn cosine(q: &BTreeMap<String, f64>, q_norm: f64, d: &BTreeMap<String, f64>) -> f64 {
    let d_norm: f64 = d.values().map(|w| w * w).sum();
    if q_norm == 0.0 || d_norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = q
        .iter()
        .filter_map(|(term, w)| d.get(term).map(|v| w * v))
        .sum();
    (dot / (q_norm * d_norm).sqrt()).clamp(0.0, 1.0)
}
