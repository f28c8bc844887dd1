/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Per-record seed from `(global_seed, tag, index, replica)`.
///
/// Every generated sample's noise seed comes from here so reruns and resumed
/// runs draw identical samples.
pub fn derive_seed(global_seed: u64, tag: &str, index: u64, replica: u64) -> u64 {
    let mut h = splitmix64(global_seed);
    h = splitmix64(h ^ fnv1a(tag));
    h = splitmix64(h ^ index);
    splitmix64(h ^ replica.rotate_left(32))
}
