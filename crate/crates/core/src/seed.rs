//! Deterministic seed derivation for parallel Monte-Carlo streams.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `rep` of cell `cell` under `root`. Stable across
/// platforms and releases, unlike `std::hash`.
pub fn derive_seed(root: u64, cell: u64, rep: u64) -> u64 {
    mix(mix(mix(root) ^ cell) ^ rep.rotate_left(32))
}
