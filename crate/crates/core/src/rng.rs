//! Seeded random sources. All generators in the crate draw from ChaCha8 so
//! that output is bit-reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-subtask seed: `seed ⊕ task`.
#[inline]
pub fn derive_seed(seed: u64, task: u64) -> u64 {
    seed ^ task
}

/// Cumulative sums of a probability vector, with the last entry pinned to 1.
pub(crate) fn cumulative<T: Real>(probs: &[T]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p.as_f64();
            acc
        })
        .collect();
    // Pin the tail to the last symbol with positive mass.
    if let Some(last) = probs.iter().rposition(|p| *p > T::zero()) {
        for c in &mut cdf[last..] {
            *c = 1.0;
        }
    }
    cdf
}

/// Inverse-CDF draw: the first symbol whose cumulative mass exceeds `u`.
pub(crate) fn sample_cdf<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}
