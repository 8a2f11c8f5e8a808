//! Seed derivation for the independent RNG streams used across a run.
//!
//! Every stochastic component (spawn sampling, sensor corruption, weight
//! init, exploration) owns its own [`ChaCha8Rng`] seeded through
//! [`derive_seed`], so streams never interleave and runs replay exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, kept distinct so derived seeds never collide across roles.
pub mod stream {
    pub const SPAWN: u64 = 0x01;
    pub const SENSOR: u64 = 0x02;
    pub const AGENT: u64 = 0x03;
    pub const INIT: u64 = 0x04;
    pub const EVAL: u64 = 0x05;
}

/// splitmix64 finalizer; decorrelates nearby root seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a stream tag.
pub fn derive_seed(root: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(root) ^ splitmix64(tag.wrapping_mul(0xa076_1d64_78bd_642f)))
}

/// Seeded stream constructor used throughout the crate.
pub fn stream_rng(root: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag))
}
