//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed off a master seed and a string
//! label, so adding or removing one consumer never perturbs the others.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;
const GOLDEN: u64 = 0x9e3779b97f4a7c15;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Sub-seed for the stream named by `label`.
pub(crate) fn derive(master: u64, label: &str) -> u64 {
    let h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    splitmix64(fnv1a(h, label.as_bytes()))
}

/// Indexed sub-seed under an already-derived base.
pub(crate) fn mix(base: u64, k: u64) -> u64 {
    splitmix64(base ^ k.wrapping_mul(GOLDEN))
}
