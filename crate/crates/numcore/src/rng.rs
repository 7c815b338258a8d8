//! Seeded random streams.
//!
//! Every stochastic choice in the pipeline (weight init, latent draws, batch
//! shuffles, fold assignment, corpus synthesis) flows through [`Rng`] so that
//! a run is a pure function of its inputs and one `u64` seed. The generator
//! is ChaCha8, which is platform-independent and cheap to fork into derived
//! streams. Gaussian variates are always drawn in `f64` and cast afterwards,
//! so an `f32` model and its `f64` gradient-check twin see the same stream.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Real, Tensor};

/// Deterministic random source with a recoverable seed.
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

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fork an independent stream keyed by `tag`. Derivation is pure in
    /// (seed, tag), so concurrent consumers can be seeded without sharing
    /// mutable state.
    pub fn derive(&self, tag: u64) -> Rng {
        // SplitMix64-style mix keeps derived seeds well separated even for
        // small consecutive tags.
        let mut z = self
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(tag.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Rng::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.gen_range(0..n)
    }

    /// Standard normal variate.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}

/// Tensor of iid standard normal draws.
pub fn gaussian_sample<E: Real>(rng: &mut Rng, shape: &[usize]) -> Tensor<E> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| E::from_f64(rng.normal())).collect();
    Tensor::from_vec(shape, data).expect("gaussian_sample length")
}

/// Tensor of iid N(0, stddev^2) draws, used for weight initialization.
pub fn normal_init<E: Real>(rng: &mut Rng, shape: &[usize], stddev: f64) -> Tensor<E> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| E::from_f64(rng.normal() * stddev))
        .collect();
    Tensor::from_vec(shape, data).expect("normal_init length")
}
