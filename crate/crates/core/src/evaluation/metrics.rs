use std::collections::HashMap;

use super::EvalError;

/// Additive smoothing for zero-count n-gram precisions.
pub const BLEU_EPSILON: f64 = 0.1;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped `n`-gram precision, smoothed to `ε / denominator` when nothing matches.
fn modified_precision(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let total: usize = cand.values().sum();
    let clipped: usize = cand
        .iter()
        .map(|(gram, c)| (*c).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    if clipped == 0 {
        BLEU_EPSILON / total.max(1) as f64
    } else {
        clipped as f64 / total as f64
    }
}

/// Sentence BLEU with uniform weights over 1..=`n`-grams.
pub fn bleu_n(candidate: &[String], reference: &[String], n: usize) -> Result<f64, EvalError> {
    if candidate.is_empty() {
        return Err(EvalError::EmptyCandidate);
    }
    if n == 0 {
        return Err(EvalError::InvalidOrder(n));
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = (1.0 - r / c).exp().min(1.0);
    let log_sum: f64 = (1..=n)
        .map(|k| modified_precision(candidate, reference, k).ln())
        .sum();
    Ok(bp * (log_sum / n as f64).exp())
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (β = 1).
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64, EvalError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return Ok(0.0);
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Best exact-match alignment: the most matches, then the fewest chunks.
/// Returns `(matches, chunks)`.
pub fn align(candidate: &[String], reference: &[String]) -> (usize, usize) {
    struct Search<'a> {
        cand: &'a [String],
        positions: Vec<Vec<usize>>,
        memo: HashMap<(usize, usize, Vec<u64>), (usize, usize)>,
    }

    impl Search<'_> {
        // Best (matches, chunks) for cand[i..], given the reference position
        // matched by cand[i-1] (offset by one, 0 = unmatched) and the used set.
        fn best(&mut self, i: usize, prev: usize, used: &mut Vec<u64>) -> (usize, usize) {
            if i == self.cand.len() {
                return (0, 0);
            }
            let key = (i, prev, used.clone());
            if let Some(hit) = self.memo.get(&key) {
                return *hit;
            }
            let mut best = self.best(i + 1, 0, used);
            for j in self.positions[i].clone() {
                let (word, bit) = (j / 64, 1u64 << (j % 64));
                if used[word] & bit != 0 {
                    continue;
                }
                used[word] |= bit;
                let (m, ch) = self.best(i + 1, j + 1, used);
                used[word] &= !bit;
                let opened = usize::from(prev == 0 || prev != j);
                let option = (m + 1, ch + opened);
                if option.0 > best.0 || (option.0 == best.0 && option.1 < best.1) {
                    best = option;
                }
            }
            self.memo.insert(key, best);
            best
        }
    }

    let positions = candidate
        .iter()
        .map(|w| reference.iter().enumerate().filter(|(_, r)| *r == w).map(|(j, _)| j).collect())
        .collect();
    let mut search = Search {
        cand: candidate,
        positions,
        memo: HashMap::new(),
    };
    let mut used = vec![0u64; reference.len().div_ceil(64).max(1)];
    search.best(0, 0, &mut used)
}

/// METEOR with exact unigram matching only.
pub fn meteor_lite(candidate: &[String], reference: &[String]) -> Result<f64, EvalError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (m, chunks) = align(candidate, reference);
    if m == 0 {
        return Ok(0.0);
    }
    let m_f = m as f64;
    let p = m_f / candidate.len() as f64;
    let r = m_f / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m_f).powi(3);
    Ok(fmean * (1.0 - penalty))
}
