//! Counter-based seeding: sample `i` of a stream is always produced by shard
//! `i / SHARD_LEN` with its own ChaCha stream, so results do not depend on
//! how shards are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

pub const SHARD_LEN: usize = 1 << 14;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Produces `n` values, `f(rng, i)` for the `i`-th, in parallel with a
/// deterministic merge.
pub fn generate<R, F>(n: usize, seed: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> R + Sync,
{
    let shards = n.div_ceil(SHARD_LEN);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let lo = s * SHARD_LEN;
            let hi = (lo + SHARD_LEN).min(n);
            (lo..hi).map(|i| f(&mut rng, i)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Fallible variant of [`generate`]; the first error in index order wins.
pub fn try_generate<R, F>(n: usize, seed: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<R> + Sync,
{
    generate(n, seed, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn independent_of_thread_count() {
        let draw = |rng: &mut ChaCha8Rng, _i: usize| rng.random::<u64>();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| generate(3 * SHARD_LEN + 17, 9, draw));
        let b = four.install(|| generate(3 * SHARD_LEN + 17, 9, draw));
        assert_eq!(a, b);
        let c = generate(3 * SHARD_LEN + 17, 10, draw);
        assert_ne!(a, c);
    }
}
