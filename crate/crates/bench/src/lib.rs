//! Shared workloads for the benchmarks.

use camdot_core::geodot::build_context;
use camdot_core::{Context, ProjectionMatrix};

/// Deterministic vectors in [-1, 1) from a SplitMix64 stream.
pub fn vectors(seed: u64, count: usize, n: usize) -> Vec<f64> {
    let mut state = seed;
    (0..count * n)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

pub fn contexts(seed: u64, count: usize, n: usize, projection: &ProjectionMatrix) -> Vec<Context> {
    vectors(seed, count, n).chunks_exact(n).map(|x| build_context(x, projection).unwrap()).collect()
}
