//! First-principles metric implementations used to cross-check the library.
//! Deliberately naive: linear scans, subset enumeration, exhaustive alignment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return vec![];
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn occurrences(list: &[Vec<String>], gram: &[String]) -> usize {
    list.iter().filter(|g| g.as_slice() == gram).count()
}

pub fn bleu(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let mut product = 1.0;
    for k in 1..=n {
        let cand = grams(candidate, k);
        let refs = grams(reference, k);
        let mut distinct: Vec<Vec<String>> = vec![];
        for g in &cand {
            if !distinct.contains(g) {
                distinct.push(g.clone());
            }
        }
        let clipped: usize = distinct
            .iter()
            .map(|g| occurrences(&cand, g).min(occurrences(&refs, g)))
            .sum();
        let p = if clipped == 0 {
            0.1 / (cand.len().max(1) as f64)
        } else {
            clipped as f64 / cand.len() as f64
        };
        product *= p;
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * product.powf(1.0 / n as f64)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence by trying every subset of `a`.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "oracle is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if picked.len() > best && is_subsequence(&picked, b) {
            best = picked.len();
        }
    }
    best
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    let l = lcs(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

fn enumerate(
    cand: &[String],
    reference: &[String],
    i: usize,
    used: &mut Vec<bool>,
    pairs: &mut Vec<(usize, usize)>,
    best: &mut (usize, usize),
) {
    if i == cand.len() {
        let m = pairs.len();
        let mut chunks = 0;
        for (k, &(ci, rj)) in pairs.iter().enumerate() {
            let continues = k > 0 && pairs[k - 1] == (ci.wrapping_sub(1), rj.wrapping_sub(1));
            if !continues {
                chunks += 1;
            }
        }
        if m > best.0 || (m == best.0 && chunks < best.1) {
            *best = (m, chunks);
        }
        return;
    }
    enumerate(cand, reference, i + 1, used, pairs, best);
    for j in 0..reference.len() {
        if !used[j] && reference[j] == cand[i] {
            used[j] = true;
            pairs.push((i, j));
            enumerate(cand, reference, i + 1, used, pairs, best);
            pairs.pop();
            used[j] = false;
        }
    }
}

/// Every partial one-to-one alignment, keeping the most matches then fewest chunks.
pub fn alignment(candidate: &[String], reference: &[String]) -> (usize, usize) {
    let mut best = (0, usize::MAX);
    enumerate(candidate, reference, 0, &mut vec![false; reference.len()], &mut vec![], &mut best);
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

pub fn meteor(candidate: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = alignment(candidate, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    fmean * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}

/// Mean over the full cartesian product, enumerated into a list first.
pub fn all_pairs_mean<F: Fn(&[String], &[String]) -> f64>(preds: &[Vec<String>], refs: &[Vec<String>], f: F) -> f64 {
    let pairs: Vec<(&Vec<String>, &Vec<String>)> = preds.iter().flat_map(|p| refs.iter().map(move |r| (p, r))).collect();
    let mut total = 0.0;
    for (p, r) in &pairs {
        total += f(p, r);
    }
    total / pairs.len() as f64
}

/// Random non-empty token sequence over a small vocabulary, so repeats are common.
pub fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    const VOCAB: [&str; 6] = ["i", "the", "exam", "fail", "will", "pass"];
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
