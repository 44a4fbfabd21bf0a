//! Seed splitting.
//!
//! Every random quantity is derived from a single 64-bit seed. A run with
//! seed `s` owns the generator `ChaCha8(s)`; independent sub-streams (one
//! per trial, per experiment arm, ...) use the same key with a distinct
//! 64-bit ChaCha stream id. A failing trial `k` can therefore be replayed
//! in isolation with `stream_rng(s, k)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for the `index`-th item of a named family, so that e.g. trial 3
/// of the contraction check and trial 3 of the Dirac check do not collide.
pub fn family_stream(family: u32, index: u32) -> u64 {
    (u64::from(family) << 32) | u64::from(index)
}
