//! Seed derivation for independent random streams.

/// SplitMix64 finalizer over `base` mixed with a stream index. Used to give
/// each tree, fold and specimen its own generator, so results do not depend
/// on the order in which parallel work runs.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
