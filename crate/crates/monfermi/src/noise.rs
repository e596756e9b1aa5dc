//! Deterministic per-trajectory noise.
//!
//! Every trajectory owns a counter-based ChaCha8 stream addressed by
//! `(master_seed, trajectory_index)`. Streams never overlap and draws depend
//! only on the pair, so any trajectory can be replayed in isolation and
//! ensembles are reproducible regardless of scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random source for one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    trajectory_index: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Stream `trajectory_index` of the generator family keyed by `master_seed`.
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory_index);
        Self { master_seed, trajectory_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    /// `count` independent draws from N(0, variance).
    ///
    /// The underlying standard-normal draws happen even for zero variance, so
    /// the stream position advances identically for every variance value; the
    /// returned increments are then exactly zero rather than `0.0 * z`.
    pub fn gaussian_increments(&mut self, count: usize, variance: f64) -> Vec<f64> {
        assert!(variance >= 0.0, "variance must be nonnegative, got {variance}");
        let sd = variance.sqrt();
        (0..count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                if variance == 0.0 { 0.0 } else { sd * z }
            })
            .collect()
    }

    /// One draw uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}
