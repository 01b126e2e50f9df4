//! Seeded random streams.
//!
//! Every run is driven by one user-visible seed. Independent components
//! (chains, replicates, simulation stages) get their own ChaCha stream
//! derived from that seed, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
