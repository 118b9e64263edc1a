//! Seeded random streams.
//!
//! Every randomized call site draws from its own stream, derived from the
//! global seed, a module tag and an instance index. Results therefore do not
//! depend on the order in which parallel workers run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RngSpec {
    pub global_seed: u64,
}

impl RngSpec {
    pub const fn new(global_seed: u64) -> Self {
        Self { global_seed }
    }

    pub fn stream(&self, tag: &str, index: u64) -> StreamRng {
        ChaCha8Rng::seed_from_u64(stream_seed(self.global_seed, tag, index))
    }

    /// Derives a child seed, for call sites that take a plain `u64` seed.
    pub fn derive(&self, tag: &str, index: u64) -> u64 {
        stream_seed(self.global_seed, tag, index)
    }
}

/// SplitMix64 finalizer.
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
pub const fn tag_hash(tag: &str) -> u64 {
    let bytes = tag.as_bytes();
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

pub const fn stream_seed(global_seed: u64, tag: &str, index: u64) -> u64 {
    mix64(mix64(global_seed ^ tag_hash(tag)) ^ mix64(index))
}

/// Standard normal draw.
pub(crate) fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}
