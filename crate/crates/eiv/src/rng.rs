//! Counter-based random streams.
//!
//! Every consumer of randomness receives an explicit [`RandomStream`].
//! Streams are keyed by (master seed, stream index) on top of ChaCha's
//! 64-bit stream counter, so work items (Monte Carlo replications, fit
//! restarts) draw from disjoint streams no matter in which order or on
//! which thread they run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `index` under `master`; disjoint for distinct indices.
    pub fn substream(master: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        rng.set_stream(index);
        RandomStream { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Gamma(shape, scale) draw; chi-square(ν) is gamma(ν/2, 2).
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        Gamma::new(shape, scale)
            .expect("gamma parameters must be positive")
            .sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// A fresh 64-bit seed drawn from this stream, for keying sub-tasks.
    pub fn next_seed(&mut self) -> u64 {
        self.rng.random::<u64>()
    }
}

/// SplitMix64-style mixing of seed material into a new seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
