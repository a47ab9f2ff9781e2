//! Counter-based randomness.
//!
//! Every random decision in this crate is a pure function of a 64-bit seed
//! and a record (or replication) counter. Draws therefore do not depend on
//! iteration order, chunking, or thread count, which is what makes subsample
//! draws and simulation reports reproducible bit-for-bit.

/// Named sub-streams derived from a master seed. Keeping the constants here
/// lets external callers (the CLI) reproduce library pipelines exactly.
pub mod stream {
    pub const DATA: u64 = 0xDA7A_5E70;
    pub const PILOT: u64 = 0x9140_7000;
    pub const MAIN_DRAW: u64 = 0x5A3B_1E00;
    pub const ORACLE: u64 = 0x04AC_1E00;
}

/// SplitMix64-style avalanche of a single word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless mix of (seed, stream, counter) into one avalanched word.
#[inline]
pub fn mix3(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = mix64(seed ^ 0x243F_6A88_85A3_08D3);
    let b = mix64(a ^ stream.wrapping_mul(0x1319_8A2E_0370_7344));
    mix64(b ^ counter.wrapping_mul(0xA409_3822_299F_31D0))
}

/// Uniform draw on the open interval (0, 1) for a given (seed, stream, counter).
#[inline]
pub fn u01(seed: u64, stream: u64, counter: u64) -> f64 {
    // 53 high bits, offset by half an ulp so 0.0 and 1.0 are unreachable.
    ((mix3(seed, stream, counter) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Seed for replication `rep` derived from a master seed.
#[inline]
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    mix3(master, 0x5EED_5EED, rep)
}
