//! Deterministic seeded random streams. Independent sub-streams are
//! derived by stable hashing of (seed, stream id), so regenerating one
//! stream never disturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic random stream for `(seed, stream_id)`. Stable across
/// platforms and runs.
pub fn stream_rng(seed: u64, stream_id: &str) -> ChaCha12Rng {
    let mut state = seed ^ fnv1a64(stream_id.as_bytes());
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
