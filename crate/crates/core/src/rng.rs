//! Reproducible random streams.
//!
//! Every consumer of randomness asks for a stream keyed by
//! `(global seed, purpose, index)`. The key is mixed into a ChaCha8 key and
//! the index selects the ChaCha stream, so replications are independent of
//! each other and of the order (or thread) in which they run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Noise = 1,
    Fuzz = 2,
    RateSampling = 3,
    ChainPath = 4,
    Batches = 5,
    Multiplier = 6,
    Sharpness = 7,
    Init = 8,
    Test = 99,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Stream {
    let mut state = seed ^ (purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Nested key, e.g. `(replication, eta index)`: folds `sub` into the seed.
pub fn substream(seed: u64, purpose: Purpose, index: u64, sub: u64) -> Stream {
    let mut s = seed ^ sub.wrapping_mul(0xA24B_AED4_963E_E407);
    stream(splitmix64(&mut s), purpose, index)
}

/// Uniform draw on (0, 1]; safe to feed into `powf(-1/alpha)` and `ln`.
#[inline]
pub fn open_closed01<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    // 53 random bits mapped to {1, ..., 2^53} / 2^53.
    let bits = rng.next_u64() >> 11;
    (bits + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
