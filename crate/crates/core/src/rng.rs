//! Seeded, portable random source for simulation.
//!
//! The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`. All
//! draws go through [`SimRng::uniform`], which takes the top 53 bits of one
//! `next_u64` call, so every categorical draw consumes exactly one 64-bit
//! word. Golden fixtures in the test-suite depend on this.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Inverse-CDF draw from a probability vector.
    ///
    /// Zero-probability entries are never returned; if rounding leaves the
    /// cumulative sum short of the uniform draw, the last entry with
    /// positive mass is returned.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
        last_positive
    }

    pub(crate) fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
