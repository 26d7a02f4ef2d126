//! Deterministic chunked random streams.
//!
//! Work over an index range is split into fixed-size chunks. Chunk `k` draws
//! from ChaCha8 seeded with the master seed on stream `k`, so the output does
//! not depend on how many worker threads process the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per chunk for Monte Carlo loops.
pub const CHUNK: usize = 4096;

/// The RNG for stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f(chunk_index, len, rng)` over `ceil(count / chunk)` chunks in
/// parallel and returns the per-chunk results in chunk order.
pub fn chunked<T, F>(count: usize, chunk: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, &mut ChaCha8Rng) -> T + Sync,
{
    let n_chunks = count.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let len = chunk.min(count - k * chunk);
            let mut rng = stream(seed, k as u64);
            f(k, len, &mut rng)
        })
        .collect()
}

/// Derives an independent seed for a named sub-task.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws an index from a discrete law given by its cumulative weights.
#[inline]
pub fn pick(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative[cumulative.len() - 1];
    cumulative
        .partition_point(|&c| c <= target)
        .min(cumulative.len() - 1)
}

pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}
