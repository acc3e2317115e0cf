//! Seeded random streams.
//!
//! Every stream is a xoshiro256** generator. Its 64-bit seed is derived from a
//! run seed and a list of stream ids by folding them through SplitMix64:
//!
//! ```text
//! s = splitmix64(seed)
//! for id in ids: s = splitmix64(s ^ splitmix64(id + 0x9E3779B97F4A7C15))
//! state = xoshiro256**::seed_from_u64(s)   // SplitMix64 state expansion
//! ```
//!
//! Uniform doubles use the top 53 bits of `next_u64`; Gaussians use Box–Muller
//! with the second value of each pair cached for the next call.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::tensor::Tensor;

/// Stream ids used across the crate. Fixed so that runs replay bit-exactly.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const QUEUE: u64 = 3;
    pub const PRIOR: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const PROJECTION: u64 = 7;
    pub const SWEEP: u64 = 8;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a run seed and stream ids.
pub fn derive_seed(seed: u64, ids: &[u64]) -> u64 {
    ids.iter().fold(splitmix64(seed), |s, &id| {
        splitmix64(s ^ splitmix64(id.wrapping_add(GOLDEN)))
    })
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, &[])
    }

    pub fn stream(seed: u64, ids: &[u64]) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(derive_seed(seed, ids)),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    fn uniform_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw via Box–Muller.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in `0..n` without modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n) as usize;
            }
        }
    }

    /// Tensor of i.i.d. standard normal entries.
    pub fn gaussian_tensor(&mut self, shape: &[usize]) -> crate::Result<Tensor> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.gaussian()).collect();
        Tensor::new(shape.to_vec(), data)
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}
