//! Deterministic seed derivation.
//!
//! Every randomized stage draws from its own ChaCha stream whose seed is
//! derived from the master seed and a short domain label, so adding or
//! removing one stage never shifts the random draws of another.

/// Derives a per-domain seed from a master seed and a label.
///
/// The label is hashed with FNV-1a, mixed into the master seed, and finalized
/// with a SplitMix64 step so that related master seeds map to unrelated
/// stream seeds.
pub fn derive_seed(master: u64, domain: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in domain.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
