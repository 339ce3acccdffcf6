//! Fixture builders shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomforge_core::evaluation::TokenizedText;

const VOCAB: &[&str] = &[
    "i", "feel", "my", "friend", "will", "exam", "happy", "the", "job", "worried", "pass", "call",
    "tomorrow", "again", "lost", "new", "home", "work", "sad", "plan",
];

/// `n` seeded (candidate, reference) sentence pairs of 5..=`max_len` tokens.
pub fn sentence_pairs(n: usize, max_len: usize, seed: u64) -> Vec<(TokenizedText, TokenizedText)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(5..=max_len.max(5));
        TokenizedText((0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string()).collect())
    };
    (0..n).map(|_| (sentence(&mut rng), sentence(&mut rng))).collect()
}
