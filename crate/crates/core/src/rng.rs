//! Counter-based random number generation.
//!
//! Every draw is a pure function of a key tuple, so path simulation can be
//! parallelized or re-run in any order without changing a single bit of
//! output. Gaussian increments are produced by Box-Muller from two keyed
//! uniforms.

/// SplitMix64 finalizer. Bijective on `u64` with good avalanche behavior.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a sequence of words into a single well-scrambled key.
pub fn mix_key(words: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64; // arbitrary odd constant
    for &w in words {
        h = splitmix64(h ^ w.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    splitmix64(h)
}

/// Maps a `u64` to the open interval (0, 1).
pub fn unit_open(x: u64) -> f64 {
    // 52 random bits plus a half-ulp offset: exactly representable, so the
    // result can reach neither 0 nor 1.
    ((x >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Uniform draw in (0, 1) for the given key tuple.
pub fn uniform(seed: u64, path: u64, step: u64, draw: u64) -> f64 {
    unit_open(mix_key(&[seed, path, step, draw]))
}

/// Standard normal draw for the given key tuple.
///
/// Draws with indices `2p` and `2p+1` share one Box-Muller pair; any index
/// may be requested independently of the others.
pub fn normal(seed: u64, path: u64, step: u64, draw: u64) -> f64 {
    let pair = draw / 2;
    let u1 = uniform(seed, path, step, 2 * pair);
    let u2 = uniform(seed, path, step, 2 * pair + 1);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    if draw % 2 == 0 {
        r * theta.cos()
    } else {
        r * theta.sin()
    }
}
