//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by `(master seed, label, index)`, so
//! results do not depend on the order in which work items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derives a child seed from a parent seed, a stream label and an index.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(parent ^ fnv1a(label));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Generator for the stream `(parent, label, index)`.
pub fn rng(parent: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(parent, label, index))
}
