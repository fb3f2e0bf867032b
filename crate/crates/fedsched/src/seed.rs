//! Labeled sub-seed derivation.
//!
//! Every random component of a run (channels, compute power, partitioning,
//! policy randomness) draws its seed from the master seed combined with a
//! stable label hash, so adding a component never perturbs existing streams
//! and changing the policy leaves e.g. the channel realization untouched.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over the label bytes; stable across platforms and versions.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Sub-seed for a named component of a run.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    // splitmix finalizer so that nearby master seeds decorrelate
    let mut z = master ^ label_hash(label);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for a (master seed, label) pair.
pub fn rng_for(master: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(sub_seed(master, label))
}

/// RNG for a labeled component at a given slot, e.g. per-slot power draws.
pub fn rng_for_slot(master: u64, label: &str, t: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(sub_seed(master, label) ^ (t as u64).wrapping_mul(0x9e3779b97f4a7c15))
}
