//! Seed derivation for schedule-independent randomness.

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a base seed with stream identifiers so parallel workers draw from
/// independent, order-free streams.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &p in parts {
        state = splitmix(state ^ p.wrapping_mul(0xff51afd7ed558ccd));
    }
    state
}
