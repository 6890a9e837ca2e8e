//! Seed derivation.
//!
//! Every stochastic routine takes a master seed and splits it into
//! independent ChaCha substreams, so parallel and serial runs consume
//! exactly the same random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels for the independent streams used inside one experiment.
pub mod stream {
    pub const REFERENCE: u64 = 1;
    pub const THRESHOLD: u64 = 2;
    pub const DATA: u64 = 3;
    pub const EXOGENOUS: u64 = 4;
    pub const OUTPUT: u64 = 5;
}

/// SplitMix64 finaliser; used to derive child seeds from `(seed, label)`.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replication `index` of the stream seeded by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
