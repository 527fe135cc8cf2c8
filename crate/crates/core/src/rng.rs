//! Seeded, counter-based random streams.
//!
//! Every stochastic operation derives its generator from an explicit
//! `(seed, stream)` pair, so any trial can be regenerated in isolation and
//! parallel execution order never changes the numbers drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for user placement.
pub const STREAM_USERS: u64 = 0x5553_4552;
/// Base stream tag for per-trial draws; trial `t` uses `STREAM_TRIALS + t`.
pub const STREAM_TRIALS: u64 = 1 << 32;

/// Generator for the given seed and stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    stream_rng(seed, STREAM_TRIALS.wrapping_add(trial))
}

/// Sub-stream seed derived from a parent seed and a label; used when one
/// trial needs several independent generators (e.g. one per receiver).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
