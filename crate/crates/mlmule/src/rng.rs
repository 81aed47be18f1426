//! Seed derivation for the independent RNG streams.
//!
//! A simulation run owns several ChaCha streams derived from one master
//! seed: mobility, learning, data arrival, and per-call evaluation
//! streams. Keeping them separate means the position trace for a given
//! (world config, seed) pair is identical no matter which learning
//! method runs on top of it, and evaluation never perturbs either.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

pub const STREAM_MOBILITY: u64 = 0x4d4f42494c495459; // "MOBILITY"
pub const STREAM_LEARNING: u64 = 0x4c4541524e5f5f5f; // "LEARN___"
pub const STREAM_ARRIVAL: u64 = 0x4152524956414c5f; // "ARRIVAL_"
pub const STREAM_EVAL: u64 = 0x4556414c5f5f5f5f; // "EVAL____"
pub const STREAM_PLACEMENT: u64 = 0x504c4143455f5f5f; // "PLACE___"

/// SplitMix64 finalizer; stable across platforms and Rust versions,
/// unlike `std`'s `DefaultHasher`.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// RNG for a named stream of a master seed.
pub fn derive(master: u64, stream: u64) -> SimRng {
    SimRng::seed_from_u64(mix(master ^ mix(stream)))
}

/// RNG keyed by two extra coordinates (e.g. tick and entity index),
/// used for side-effect-free evaluation.
pub fn derive_keyed(master: u64, stream: u64, a: u64, b: u64) -> SimRng {
    let k = mix(master ^ mix(stream)) ^ mix(a.wrapping_mul(0x9e3779b97f4a7c15) ^ mix(b));
    SimRng::seed_from_u64(k)
}
