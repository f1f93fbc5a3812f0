//! Named, independent random streams derived from one master seed.
//!
//! Every consumer (arm draws, index sampling, feature frequencies, file
//! shuffles, ...) gets its own ChaCha stream, so adding draws in one consumer
//! never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

// FNV-1a
fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `name[index]` of `master`.
pub fn stream(master: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(mix(name_hash(name) ^ mix(index)));
    rng
}

/// Derived 64-bit seed for consumers that want a plain integer.
pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    mix(master ^ mix(name_hash(name) ^ mix(index)))
}
