//! Small numeric helpers used across the crate.

use std::f64::consts::PI;

/// Sums a slice by pairwise (tree) reduction.
///
/// Deterministic for a fixed element order regardless of thread count, and
/// keeps the error growth logarithmic in the element count, which matters for
/// covariance sums over hundreds of thousands of pixels.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Wraps an angle to the interval (-pi, pi].
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI); // [0, 2pi)
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// One SplitMix64 mixing step.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the noise stream for one (frame, pixel) sample.
///
/// Every sample owns an independent generator seeded from this value, so the
/// result of noisy synthesis does not depend on pixel evaluation order.
#[inline]
pub fn sample_seed(seed: u64, frame: u64, pixel: u64) -> u64 {
    splitmix64(splitmix64(seed ^ frame.wrapping_mul(0xa076_1d64_78bd_642f)) ^ pixel.wrapping_mul(0xe703_7ed1_a0b4_28db))
}
