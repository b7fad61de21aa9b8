//! Seeded Monte Carlo backbone: per-sample counter-derived RNG streams and a
//! blockwise reduction whose result does not depend on how work is split
//! across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A Monte Carlo estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0, samples: 0 }
    }
}

/// Block size for the deterministic parallel reduction. Fixed so that the
/// chunking (and hence the floating-point summation order) never depends on
/// the thread count.
const BLOCK: usize = 8192;

/// RNG for sample `index` of the stream identified by `seed`. Every sample
/// owns an independent ChaCha stream, so a sample's draws are the same no
/// matter which thread evaluates it or how many draws its neighbours used.
pub(crate) fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a named sub-seed from a master seed (splitmix64 step).
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean and standard error of `f(ctx, i)` over `i in 0..count`.
///
/// Blocks are evaluated in parallel but merged in index order, so the result
/// is bit-identical for any number of worker threads.
pub(crate) fn reduce_mean<C, F, G>(count: usize, make_ctx: G, f: F) -> Estimate
where
    C: Send,
    G: Fn() -> C + Sync,
    F: Fn(&mut C, usize) -> f64 + Sync,
{
    assert!(count >= 1, "sample count must be at least 1");
    let blocks = count.div_ceil(BLOCK);
    let partials: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut ctx = make_ctx();
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(count);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for i in lo..hi {
                let v = f(&mut ctx, i);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq)
        })
        .collect();
    finish(count, partials.iter().map(|p| p.0).collect(), partials.iter().map(|p| p.1).collect())
}

/// Like [`reduce_mean`] but additionally accumulates a vector of length
/// `dim` per sample (used for gradient estimates). Returns the scalar
/// estimate and the per-coordinate means.
pub(crate) fn reduce_mean_with_vec<C, F, G>(
    count: usize,
    dim: usize,
    make_ctx: G,
    f: F,
) -> (Estimate, Vec<f64>)
where
    C: Send,
    G: Fn() -> C + Sync,
    F: Fn(&mut C, usize, &mut [f64]) -> f64 + Sync,
{
    assert!(count >= 1, "sample count must be at least 1");
    let blocks = count.div_ceil(BLOCK);
    let partials: Vec<(f64, f64, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut ctx = make_ctx();
            let mut acc = vec![0.0; dim];
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(count);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for i in lo..hi {
                let v = f(&mut ctx, i, &mut acc);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq, acc)
        })
        .collect();
    let mut vec_acc = vec![0.0; dim];
    for p in &partials {
        for (a, b) in vec_acc.iter_mut().zip(&p.2) {
            *a += b;
        }
    }
    let inv = 1.0 / count as f64;
    for a in vec_acc.iter_mut() {
        *a *= inv;
    }
    let est = finish(
        count,
        partials.iter().map(|p| p.0).collect(),
        partials.iter().map(|p| p.1).collect(),
    );
    (est, vec_acc)
}

fn finish(count: usize, sums: Vec<f64>, sum_sqs: Vec<f64>) -> Estimate {
    let total: f64 = sums.iter().sum();
    let total_sq: f64 = sum_sqs.iter().sum();
    let n = count as f64;
    let mean = total / n;
    let std_error = if count > 1 {
        let var = ((total_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Estimate { value: mean, std_error, samples: count }
}
