//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (counter-based, 2^64 blocks per
//! stream) keyed from a 64-bit seed. Child streams are keyed by mixing the
//! parent seed with a child index through the SplitMix64 finalizer, so a
//! whole experiment is a function of one master seed and the replicate
//! indices, independent of scheduling.
//!
//! Normal variates use the inverse-CDF transform of a uniform drawn from the
//! open interval (0, 1); the inverse CDF is the rational approximation of the
//! inverse complementary error function used by `statrs`. One uniform is
//! consumed per normal, so streams never depend on rejection branches.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `(self.seed, index)`.
    ///
    /// Depends only on the parent's seed, not on how many draws the parent
    /// has already produced.
    pub fn child(&self, index: u64) -> Rng {
        let mixed = splitmix64(splitmix64(self.seed) ^ splitmix64(index ^ 0xD1B5_4A32_D192_ED03));
        Rng::new(mixed)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    /// Uniform on `(-a, a)`.
    #[inline]
    pub fn uniform_symmetric(&mut self, a: f64) -> f64 {
        a * (2.0 * self.uniform_open() - 1.0)
    }

    #[inline]
    pub fn std_normal(&mut self) -> f64 {
        std_normal_quantile(self.uniform_open())
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "bound must be positive");
        let b = bound as u64;
        let threshold = b.wrapping_neg() % b;
        loop {
            let m = (self.next_u64() as u128) * (b as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

/// Standard normal quantile function.
#[inline]
pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
