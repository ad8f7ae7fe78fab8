//! Deterministic random streams.
//!
//! Every stochastic choice in the crate (weight init, batch shuffling,
//! augmentation draws, crop offsets) flows through [`Rng`], a thin wrapper
//! over the ChaCha8 stream cipher generator. ChaCha8 has a defined bit-exact
//! output for a given seed on every platform, which is what makes training
//! runs byte-for-byte reproducible.
//!
//! Independent sub-streams (per epoch, per utterance) are derived by mixing
//! tag words into the seed with SplitMix64 so that reordering work across
//! threads cannot perturb any other stream.

use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// SplitMix64 finalizer: a well-distributed 64-bit mixing function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a 64-bit hash; used to key per-utterance random streams and to
/// fingerprint configuration strings in checkpoints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seeded deterministic generator (ChaCha8).
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this generator was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent sub-stream keyed by `tags` (e.g. epoch index and
    /// utterance index). The same (seed, tags) always yields the same stream,
    /// no matter in what order streams are created or consumed.
    pub fn derive(&self, tags: &[u64]) -> Rng {
        let mut s = splitmix64(self.seed);
        for &t in tags {
            s = splitmix64(s ^ t);
        }
        Rng::new(s)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(rand_distr::StandardNormal)
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.inner.random_range(0..n)
    }

    /// Fisher–Yates shuffle in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }

    pub fn uniform_tensor(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| self.uniform(lo, hi)).collect();
        Tensor::from_vec(shape, data).expect("uniform draws are finite")
    }

    pub fn normal_tensor(&mut self, shape: &[usize], std: f64) -> Tensor {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| self.normal() * std).collect();
        Tensor::from_vec(shape, data).expect("normal draws are finite")
    }
}
