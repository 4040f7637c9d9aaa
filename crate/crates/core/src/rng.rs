//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SimRng`], which is
//! `ChaCha8Rng` from `rand_chacha` 0.9. ChaCha output is specified
//! bit-for-bit, so traces are reproducible across platforms and releases of
//! this crate as long as that generator is kept. Independent streams are
//! split off a master seed with [`derive_rng`], keyed by purpose and index
//! rather than by execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes. Each gets its own ChaCha stream id range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitialValues,
    Activations(u32),
    Topology,
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Returns a generator for `(stream, index)` derived from `master`.
pub fn derive_rng(master: u64, stream: Stream, index: u64) -> SimRng {
    let tag: u64 = match stream {
        Stream::InitialValues => 1,
        Stream::Topology => 2,
        Stream::Activations(method) => 16 + u64::from(method),
    };
    let mut rng = SimRng::seed_from_u64(master);
    rng.set_stream(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
    rng
}

/// SplitMix64 finalizer, used to derive retry seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform index in `0..len`.
pub fn uniform_index(rng: &mut SimRng, len: usize) -> usize {
    rng.random_range(0..len)
}
