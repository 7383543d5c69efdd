//! Deterministic random substreams.
//!
//! Every estimator splits its draws into fixed-size chunks. Chunk `k` draws
//! from ChaCha stream `k` under the run seed, so results depend only on the
//! seed and the chunk layout, never on how many threads run the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Draws per chunk.
pub const CHUNK: usize = 1024;

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(chunk index, first draw, draw count)` covering `0..n`.
pub fn chunks(n: usize, chunk: usize) -> Vec<(u64, usize, usize)> {
    (0..n.div_ceil(chunk))
        .map(|k| {
            let start = k * chunk;
            (k as u64, start, chunk.min(n - start))
        })
        .collect()
}

/// Runs `work(chunk index, draw count)` over every chunk of `0..n` in
/// parallel and returns the partial results in chunk order.
pub fn map_chunks<A, F>(n: usize, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(u64, usize) -> A + Sync,
{
    map_chunks_sized(n, CHUNK, work)
}

/// [`map_chunks`] with an explicit chunk size.
pub fn map_chunks_sized<A, F>(n: usize, chunk: usize, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(u64, usize) -> A + Sync,
{
    chunks(n, chunk)
        .into_par_iter()
        .map(|(k, _, count)| work(k, count))
        .collect()
}
