//! Counter-based stream derivation: every replica gets a ChaCha8 stream whose
//! key depends on the master seed and a purpose tag, and whose stream id is the
//! replica index. No stream depends on the order in which others were used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags keep streams for different uses of the same replica apart.
pub mod tag {
    pub const INITIAL: u64 = 1;
    pub const DYNAMICS: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
}

/// Stream for `(master_seed, tag, index)`.
pub fn stream(master_seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = mix64(master_seed) ^ mix64(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Dynamics stream of replica `index`.
pub fn replica_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    stream(master_seed, tag::DYNAMICS, index)
}
