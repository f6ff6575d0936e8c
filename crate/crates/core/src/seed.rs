//! Stable seed derivation.
//!
//! Sub-seeds for per-(iteration, tag) sampling, per-case trial plans, and
//! per-sample request hints are all derived from the run seed with a fixed
//! mixing function, so results do not depend on platform hashers or on the
//! order in which work is scheduled.

/// SplitMix64 finalizer. Stable across platforms and rust versions.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over a byte string, for folding identifiers into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fold a sequence of parts into one sub-seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x51_7c_c1_b7_27_22_0a_95;
    for &p in parts {
        acc = splitmix(acc ^ p);
    }
    acc
}

/// Request seed hint for the `index`-th independent sample of a keyed call.
///
/// The low 16 bits are the sample index itself; the high bits mix the run
/// seed and the key. Distinct indices therefore always produce distinct
/// hints (and distinct cache keys), which is what makes "sample S
/// alternatives independently" meaningful under a cache or a deterministic
/// backend.
pub fn sample_hint(seed: u64, key: &str, index: u32) -> u64 {
    let base = mix(&[seed, fnv1a(key.as_bytes())]) & 0xffff_ffff_ffff;
    (base << 16) | u64::from(index & 0xffff)
}
