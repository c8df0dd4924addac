//! Stable seed derivation. Every random stream is keyed by a master seed
//! plus a path of labels, so adding a new stream never shifts existing ones.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed for the stream named by `labels` under `master`.
pub fn derive(master: u64, labels: &[&str]) -> u64 {
    let mut h = mix64(master);
    for label in labels {
        h = mix64(h ^ fnv1a(label.as_bytes()));
    }
    h
}
