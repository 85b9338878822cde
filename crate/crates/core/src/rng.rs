//! Counter-style seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! master seed and a path of integer labels (experiment, trial, path index,
//! ...). Two streams with different label paths never share state, and a
//! stream's output does not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Label namespaces used inside the library so that, e.g., the sampler and a
/// verifier seeded with the same master seed draw independent numbers.
pub mod tags {
    pub const MIXTURE_SAMPLE: u64 = 0x01;
    pub const FORWARD_MARGINAL: u64 = 0x02;
    pub const FORWARD_PATH: u64 = 0x03;
    pub const SAMPLER: u64 = 0x04;
    pub const VERIFIER: u64 = 0x05;
    pub const PAIRED_BATCH: u64 = 0x06;
    pub const ERROR_REPORT: u64 = 0x07;
    pub const GIRSANOV: u64 = 0x08;
    pub const EXPERIMENT: u64 = 0x09;
    pub const METRICS: u64 = 0x0a;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the stream for `(seed, labels...)`.
pub fn substream(seed: u64, labels: &[u64]) -> Stream {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &label in labels {
        state ^= label.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
        acc ^= splitmix64(&mut state);
        state = state.wrapping_add(acc);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stable 64-bit label for a string (FNV-1a).
pub fn label(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
