//! Deterministic seed derivation. Every random choice in the toolkit is keyed
//! off one master seed through these helpers, so a run is reproducible from a
//! single integer and parallel/ordering changes cannot reshuffle streams.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Sub-seed for a named purpose plus index, derived from the master seed.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a(tag.as_bytes()) ^ splitmix64(index))
}

/// Order-independent uniform draw in `[0, 1)` keyed by arbitrary parts.
/// Used where pseudo-random values must not depend on evaluation order.
pub fn hash_uniform(master: u64, parts: &[u64]) -> f64 {
    let mut h = splitmix64(master);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    // 53 mantissa bits.
    (h >> 11) as f64 / (1u64 << 53) as f64
}
