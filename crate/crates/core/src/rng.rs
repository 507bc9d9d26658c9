//! Deterministic random-number substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes a base seed and a path of indices into a 64-bit stream key.
pub fn stream_key(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Independent generator for `(seed, path)`; identical inputs always give
/// identical streams regardless of thread scheduling.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = substream(1, &[2, 3]).random();
        let b: u64 = substream(1, &[2, 3]).random();
        let c: u64 = substream(1, &[3, 2]).random();
        let d: u64 = substream(2, &[2, 3]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
