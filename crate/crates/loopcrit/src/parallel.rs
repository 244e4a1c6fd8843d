//! Replicate orchestration. Replicate ids map to fixed RNG streams and
//! results are reduced in replicate-id order, so output is byte-identical
//! regardless of worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG stream for one replicate of one run. Streams are keyed by
/// (seed, stream id) on a counter-based generator, so parallel replicates
/// never overlap.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f` for replicate ids `0..n`, in parallel when the `parallel`
/// feature is enabled. The returned vector is always in replicate order.
#[cfg(feature = "parallel")]
pub fn run_replicates<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_replicates<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Sequential reference path, always available; the benchmark suite
/// compares it against the parallel path.
pub fn run_replicates_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn parallel_and_sequential_agree() {
        let work = |rep: usize| {
            let mut rng = replicate_rng(11, rep as u64);
            (0..100).map(|_| rng.random::<f64>()).sum::<f64>()
        };
        assert_eq!(run_replicates(16, work), run_replicates_seq(16, work));
    }

    #[test]
    fn streams_are_disjoint() {
        let mut a = replicate_rng(1, 0);
        let mut b = replicate_rng(1, 1);
        let xs: Vec<f64> = (0..8).map(|_| a.random()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.random()).collect();
        assert_ne!(xs, ys);
    }
}
