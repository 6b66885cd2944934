//! Scrambled Halton points for the sampling-based assumption checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton sequence in `[0, 1)^dim` with a Cranley-Patterson rotation drawn
/// from `seed`. Dimensions beyond the prime table wrap to a fresh rotation.
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            dim,
            shift: (0..dim).map(|_| rng.gen::<f64>()).collect(),
            index: 1,
        }
    }

    pub fn next_point(&mut self, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.dim) {
            let v = radical_inverse(self.index, PRIMES[k % PRIMES.len()]) + self.shift[k];
            *o = v - v.floor();
        }
        self.index += 1;
    }
}

/// `n` quasi-random points in the closed ball of `radius` around the origin
/// (rejection from the enclosing cube).
pub fn ball_points(dim: usize, n: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    ball_tuples(dim, 1, n, radius, seed)
        .into_iter()
        .map(|mut t| t.pop().unwrap())
        .collect()
}

/// `n` tuples of `k` points in the ball, drawn jointly from one
/// `k * dim`-dimensional sequence so the tuple members are not aligned.
pub fn ball_tuples(dim: usize, k: usize, n: usize, radius: f64, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut h = Halton::new(dim * k, seed);
    let mut u = vec![0.0; dim * k];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        h.next_point(&mut u);
        let tuple: Vec<Vec<f64>> = u
            .chunks(dim)
            .map(|c| c.iter().map(|v| radius * (2.0 * v - 1.0)).collect())
            .collect();
        if tuple
            .iter()
            .all(|p| p.iter().map(|v| v * v).sum::<f64>() <= radius * radius)
        {
            out.push(tuple);
        }
    }
    out
}
