//! Seed derivation for reproducible parallel resampling.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, index)`: the 64-bit seed keys the cipher and the index selects
//! the ChaCha stream (nonce). Bootstrap replicate `r` of a test called with
//! seed `s` always reads from `stream(s, r)`, so its value does not depend
//! on which worker computes it or in what order.
//!
//! Nested levels (simulation run -> data / bootstrap) get their own seeds
//! through [`derive_seed`], a SplitMix64-based hash of `(parent, tag, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags for [`derive_seed`].
pub mod tag {
    pub const DATA: u64 = 0x6461_7461;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const GROUP: u64 = 0x6772_6f75;
    pub const PAIR: u64 = 0x7061_6972;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(tag, index)` under `parent`.
pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ splitmix64(tag)) ^ index)
}

/// Independent stream number `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
