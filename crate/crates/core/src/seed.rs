//! Deterministic sub-seed derivation.
//!
//! One master seed drives an experiment; every stage (test sampling,
//! candidate pools, S-GP samples, optimizer restarts) draws from its own
//! stream so stages stay reproducible independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and releases unlike std's hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derives a sub-seed from a master seed, a stage label and a list of
/// integer discriminators (e.g. the coordinates of an ANOVA index).
pub fn derive(master: u64, stage: &str, parts: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ fnv1a(stage.as_bytes()));
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_stages_and_parts() {
        let a = derive(1, "pool", &[0, 1]);
        assert_eq!(a, derive(1, "pool", &[0, 1]));
        assert_ne!(a, derive(1, "pool", &[1, 0]));
        assert_ne!(a, derive(1, "test", &[0, 1]));
        assert_ne!(a, derive(2, "pool", &[0, 1]));
    }
}
