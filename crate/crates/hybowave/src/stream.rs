//! Derivation of independent, reproducible ChaCha20 substreams from a single
//! run seed. Parameter initialization and per-epoch dropout masks each get
//! their own stream so adding draws to one never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_DROPOUT: u64 = 2;

/// Seeds a ChaCha20 stream from `(seed, tag, index)` with a fixed integer mix.
pub(crate) fn substream(seed: u64, tag: u64, index: u64) -> ChaCha20Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(index.wrapping_mul(0x94D0_49BB_1331_11EB));
    ChaCha20Rng::seed_from_u64(mixed)
}
