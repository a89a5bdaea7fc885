//! Seeded random streams.
//!
//! Every stochastic component takes an explicit stream so runs are
//! reproducible. Substreams are derived by mixing a label into the parent
//! seed, which keeps independent components (placement, shadowing,
//! surrogate restarts, acquisition draws, ...) decoupled: reordering one
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer; full-avalanche mixing of seed and label.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for the component identified by `label`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = mix(seed);
    for b in label.as_bytes() {
        h = mix(h ^ u64::from(*b));
    }
    h
}

/// A fresh stream for `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, label))
}

/// A fresh stream for `(seed, label, index)`, used for per-iteration or
/// per-restart substreams.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> Stream {
    Stream::seed_from_u64(mix(derive_seed(seed, label) ^ mix(index)))
}
