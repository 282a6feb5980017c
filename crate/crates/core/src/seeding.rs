//! Seed derivation and config hashing.
//!
//! Every random draw in this crate comes from a ChaCha8 stream seeded through
//! [`derive_seed`], keyed by a root seed, a purpose tag, and an item index.
//! Draws therefore never depend on iteration order, thread schedule, or how
//! work is batched.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// splitmix64 finalizer; decorrelates structured hash inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent stream seed from `(root, tag, index)`.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + tag.len());
    buf.extend_from_slice(&root.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    splitmix64(fnv1a64(&buf))
}

/// ChaCha8 stream for `(root, tag, index)`.
pub fn rng_for(root: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag, index))
}

/// Hex FNV-1a hash of a canonical config string, stored in artifact sidecars.
pub fn config_hash(canonical: &str) -> String {
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a64_matches_reference_vectors() {
        // Reference values from the published FNV-1a test suite.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn derived_seeds_differ_across_tags_and_indices() {
        let a = derive_seed(7, "noise", 0);
        let b = derive_seed(7, "noise", 1);
        let c = derive_seed(7, "shuffle", 0);
        let d = derive_seed(8, "noise", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn derive_seed_is_stable() {
        let first = derive_seed(42, "epoch", 3);
        for _ in 0..4 {
            assert_eq!(derive_seed(42, "epoch", 3), first);
        }
    }
}
