//! Seeded pseudo-random numbers.
//!
//! Every random decision in the toolkit flows through [`Rng`], a thin wrapper
//! over xoshiro256++ seeded with `seed_from_u64`. Sub-tasks get their own
//! streams from [`derive_seed`], so parallel work never shares a generator.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::rngs::Xoshiro256PlusPlus;
use rand::seq::{index, SliceRandom};
use rand::{Rng as _, RngExt, SeedableRng};
use rand_distr::StandardNormal;

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-task from a root seed.
///
/// The task name is hashed with 64-bit FNV-1a, combined with the root seed
/// and index, and mixed through SplitMix64.
pub fn derive_seed(root: u64, task: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in task.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(root ^ h).wrapping_add(index))
}

#[derive(Debug, Clone)]
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.0.random()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Integer in `[0, bound)`; `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        self.0.random_range(0..bound)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }

    /// `count` distinct indices from `0..n`.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        index::sample(&mut self.0, n, count).into_vec()
    }

    /// Index drawn from an unnormalized discrete distribution.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        WeightedIndex::new(weights)
            .expect("weights must be finite, non-negative and not all zero")
            .sample(&mut self.0)
    }
}
