//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from a master seed through
//! [`child_seed`], so independent jobs (folds, repetitions, patients) get
//! independent, reproducible streams regardless of execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the master seed and a structured tag.
pub fn child_seed(master: u64, tag: &str, parts: &[u64]) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&master.to_le_bytes());
    eat(tag.as_bytes());
    for p in parts {
        eat(&p.to_le_bytes());
    }
    h
}

pub fn rng_from(master: u64, tag: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, tag, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seeds_separate_by_tag_and_index() {
        let a = child_seed(7, "patient", &[0]);
        let b = child_seed(7, "patient", &[1]);
        let c = child_seed(7, "slice", &[0]);
        let d = child_seed(8, "patient", &[0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        // And stable across calls.
        assert_eq!(a, child_seed(7, "patient", &[0]));
    }
}
