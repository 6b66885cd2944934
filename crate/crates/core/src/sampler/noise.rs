//! Gaussian noise addressable by `(seed, step)`.
//!
//! Each step consumes a fixed number of ChaCha8 words (one `u64` pair per
//! Box-Muller draw), so the noise of step `k` can be regenerated by seeking
//! the stream instead of replaying it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_PI: f64 = std::f64::consts::TAU;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    dim: usize,
}

/// 64-bit mixer used to derive per-chain seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of chain `index` in an ensemble keyed by `master_seed`.
pub fn chain_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index as u64)
}

impl NoiseStream {
    pub fn new(seed: u64, dim: usize) -> Self {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
        }
    }

    /// 32-bit words consumed per step.
    pub fn words_per_step(dim: usize) -> u128 {
        4 * dim.div_ceil(2) as u128
    }

    /// Positions the stream at the start of step `step` (0-based).
    pub fn seek(&mut self, step: u64) {
        self.rng
            .set_word_pos(step as u128 * Self::words_per_step(self.dim));
    }

    /// Fills `out` (length `dim`) with independent standard normals.
    pub fn fill(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut i = 0;
        while i < self.dim {
            // u1 in (0, 1] keeps the logarithm finite.
            let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * INV_2_53;
            let u2 = (self.rng.next_u64() >> 11) as f64 * INV_2_53;
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TWO_PI * u2).sin_cos();
            out[i] = r * c;
            if i + 1 < self.dim {
                out[i + 1] = r * s;
            }
            i += 2;
        }
    }
}
