//! Seeded random streams.
//!
//! Every task (a prediction location, a left-out site, a replicate dataset)
//! draws from its own ChaCha stream keyed by `(seed, stream)`, so results do
//! not depend on the order in which tasks run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
