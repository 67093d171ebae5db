//! Counter-based random substreams.
//!
//! Every stream is a ChaCha8 generator keyed by the user seed with a
//! distinct 64-bit stream id, so work split across threads draws the same
//! numbers no matter how it is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DERIVE_DOMAIN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th replication or sub-experiment of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed ^ DERIVE_DOMAIN, index).next_u64()
}
