//! Counter-based sampling decisions: unit `u` of reference `r` is drawn
//! under `seed` iff `hash(seed, r, u)` mapped to [0, 1) is below the rate.
//! Decisions are independent across units and need no RNG state.

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) for one sampling unit.
pub fn unit_uniform(seed: u64, reference: &str, unit: u64) -> f64 {
    let h = mix(mix(seed ^ fnv1a(reference)).wrapping_add(unit.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn include(seed: u64, reference: &str, unit: u64, rate: f64) -> bool {
    rate >= 1.0 || unit_uniform(seed, reference, unit) < rate
}
