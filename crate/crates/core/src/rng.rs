//! Deterministic, thread-count-independent random streams.
//!
//! Every stochastic routine takes an explicit seed and derives a dedicated
//! ChaCha12 stream from `(master_seed, replicate_index, stream_tag)` via a
//! splitmix64 chain. Replicate `i` of a Monte Carlo loop always sees the same
//! stream no matter how the loop is scheduled, so outputs are byte-identical
//! at any thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit mix of `(master_seed, replicate, tag)`.
pub fn derive_seed(master: u64, replicate: u64, tag: u64) -> u64 {
    let mut s = master ^ tag.rotate_left(17);
    let a = splitmix64(&mut s);
    let mut s2 = a ^ replicate.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut s2)
}

/// Stream tags keep logically distinct draws out of each other's streams.
pub mod tag {
    pub const SAMPLER: u64 = 0x5A4D_504C_4531;
    pub const MC_TAIL: u64 = 0x4D43_5441_494C;
    pub const MC_RISK: u64 = 0x4D43_5249_534B;
    pub const DELTA_EST: u64 = 0x44_454C_5441;
    pub const COND_EST: u64 = 0x43_4F4E_44;
    pub const IID: u64 = 0x4949_44;
    pub const CERTIFY: u64 = 0x4345_5254;
}

/// ChaCha12 stream for `(master, replicate, tag)`.
pub fn stream(master: u64, replicate: u64, tag: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let mut s = derive_seed(master, replicate, tag);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
