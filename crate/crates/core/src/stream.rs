//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha8 stream selected by
//! `(master seed, replica index)`, so a replicate's output does not depend
//! on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Independent substream for replica `replica` under `master`.
pub fn replica_stream(master: u64, replica: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(replica);
    rng
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for a named part of an experiment.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h = mix64(master ^ 0x9e37_79b9_7f4a_7c15);
    for b in tag.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    h
}

/// Parses a seed written in decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(text: &str) -> Option<u64> {
    let t = text.trim().replace('_', "");
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        t.parse().ok()
    }
}
