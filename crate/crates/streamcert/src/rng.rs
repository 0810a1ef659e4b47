//! Named, reproducible random substreams.
//!
//! Every source of randomness in the crate draws from a substream addressed
//! by a root seed plus a short tag path, e.g. `(seed, EVAL_NOISE, rep, item)`.
//! This makes results independent of evaluation order: two callers that
//! address the same substream get the same bytes, and distinct tag paths get
//! statistically independent streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for the first path component. Keeping them in one place
/// guards against accidental substream collisions between subsystems.
pub mod tag {
    pub const EVAL_NOISE: u64 = 0x01;
    pub const TRAIN_INIT: u64 = 0x02;
    pub const TRAIN_SHUFFLE: u64 = 0x03;
    pub const TRAIN_AUG: u64 = 0x04;
    pub const STREAM_GEN: u64 = 0x05;
    pub const ATTACK_NOISE: u64 = 0x06;
    pub const ORACLE_INSTANCE: u64 = 0x07;
    pub const TRAIN_STREAM: u64 = 0x08;
    pub const TRAIN_SEED: u64 = 0x09;
    pub const ATTACK_SEED: u64 = 0x0A;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit substream seed from a root seed and a tag path.
pub fn substream_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// Opens the substream addressed by `(seed, tags)`.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, tags))
}
