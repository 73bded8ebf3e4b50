//! The fixed 64-bit hash used for feature mixing and the Bloom map.
//!
//! FNV-1a over raw bytes. It is defined byte-by-byte, so results do not depend
//! on platform endianness or pointer width.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_with(FNV_OFFSET, bytes)
}

/// FNV-1a continuing from an arbitrary state.
pub fn fnv1a64_with(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// splitmix64 finalizer, used to derive independent words from one hash.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random feature mixing: `H(raw) mod vocab_size`.
///
/// FNV-1a alone has weak low bits on short inputs, so the result is passed
/// through [`mix64`] before the modulo.
pub fn hash_feature(raw: &[u8], vocab_size: u32) -> u32 {
    assert!(vocab_size >= 1, "vocab_size must be positive");
    (mix64(fnv1a64(raw)) % u64::from(vocab_size)) as u32
}
