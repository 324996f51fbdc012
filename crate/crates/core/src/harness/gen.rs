//! Deterministic random corpus generation for verification sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::DocumentCollection;

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    /// Approximate total length n (terminators included).
    pub n_target: usize,
    pub max_docs: usize,
    /// Alphabet size; bytes are drawn from b'a'..
    pub alphabet: u8,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n_target: usize, max_docs: usize, alphabet: u8, seed: u64) -> Self {
        GenConfig { n_target, max_docs, alphabet, seed }
    }
}

/// Random collection: document count and lengths are drawn first, then bytes.
pub fn random_collection(cfg: GenConfig) -> DocumentCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = cfg.n_target.max(4);
    let d = rng.gen_range(1..=cfg.max_docs.max(1)).min(budget / 2).max(1);
    let mut lens = vec![1usize; d];
    let mut remaining = budget.saturating_sub(2 * d); // one byte + terminator each
    while remaining > 0 {
        let i = rng.gen_range(0..d);
        let take = rng.gen_range(1..=remaining.min(budget / d + 1));
        lens[i] += take;
        remaining -= take;
    }
    let docs: Vec<Vec<u8>> = lens
        .iter()
        .map(|&len| (0..len).map(|_| b'a' + rng.gen_range(0..cfg.alphabet)).collect())
        .collect();
    let names = (0..d).map(|i| format!("doc{i:04}")).collect();
    DocumentCollection::from_docs(docs, names).expect("generated docs are valid")
}

/// Random static weights, one per document.
pub fn random_static_weights(collection: &DocumentCollection, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57a7_1c);
    (0..collection.doc_count()).map(|_| rng.gen_range(-1000..=1000)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_sized() {
        let cfg = GenConfig::new(500, 20, 4, 42);
        let a = random_collection(cfg);
        let b = random_collection(cfg);
        assert_eq!(a, b);
        assert!(a.total_len() >= 400 && a.total_len() <= 600, "n = {}", a.total_len());
        assert!(a.doc_count() <= 20);
    }
}
