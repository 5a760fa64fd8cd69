//! Seeded RNG construction. Every stochastic component draws from a
//! ChaCha8 stream identified by `(seed, stream)`, so independent components
//! (fold shuffling, each replica, the exchange schedule) never share state
//! and parallel execution cannot reorder draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for stream `stream` of master seed `seed`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
