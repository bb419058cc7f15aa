//! Deterministic RNG stream derivation.
//!
//! Every random decision in a run is drawn from a stream derived from one
//! root seed, a short label naming the purpose, and up to two indices
//! (typically epoch and batch). Streams for different purposes are
//! independent, so adding or removing one consumer never shifts the draws
//! seen by another; that is what keeps paired-seed comparisons paired.
//!
//! Attack random starts go one step further and derive a stream per sample
//! (see [`per_sample_rng`]), which makes attack output independent of how a
//! batch is sharded across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; mixes one 64-bit word well enough for seeding.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Root of a run's randomness; copy freely, derivation is pure.
#[derive(Debug, Clone, Copy)]
pub struct Streams {
    root: u64,
}

impl Streams {
    pub fn new(root: u64) -> Self {
        Streams { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Seed for the stream `(label, a, b)`.
    pub fn seed(&self, label: &str, a: u64, b: u64) -> u64 {
        let mut z = mix(self.root ^ hash_label(label));
        z = mix(z ^ a);
        mix(z ^ b)
    }

    /// RNG for the stream `(label, a, b)`.
    pub fn rng(&self, label: &str, a: u64, b: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.seed(label, a, b))
    }
}

/// RNG for one sample within a stream already derived via [`Streams::seed`].
pub fn per_sample_rng(stream_seed: u64, sample: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(stream_seed ^ (sample as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let s = Streams::new(42);
        let a: Vec<u64> = s.rng("pgd", 3, 7).sample_iter(rand::distributions::Standard).take(4).collect();
        let b: Vec<u64> = s.rng("pgd", 3, 7).sample_iter(rand::distributions::Standard).take(4).collect();
        assert_eq!(a, b, "same stream must replay identically");
    }

    #[test]
    fn labels_and_indices_separate_streams() {
        let s = Streams::new(42);
        let base = s.seed("pgd", 0, 0);
        assert_ne!(base, s.seed("sample", 0, 0), "labels must separate streams");
        assert_ne!(base, s.seed("pgd", 1, 0), "first index must separate streams");
        assert_ne!(base, s.seed("pgd", 0, 1), "second index must separate streams");
        assert_ne!(base, Streams::new(43).seed("pgd", 0, 0), "root must separate streams");
    }

    #[test]
    fn per_sample_streams_differ() {
        let seed = Streams::new(7).seed("pgd", 0, 0);
        let mut a = per_sample_rng(seed, 0);
        let mut b = per_sample_rng(seed, 1);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }
}
