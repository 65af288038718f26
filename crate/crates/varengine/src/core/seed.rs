//! Deterministic seed streams. Parallel or repeated work derives one
//! child seed per unit of work from a master seed, so results do not
//! depend on scheduling order.

/// Mixes a master seed with a stream index (SplitMix64 finalizer).
/// Distinct salts give statistically independent child seeds.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
