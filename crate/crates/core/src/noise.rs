//! Reproducible standard-normal fields.
//!
//! A field is fully determined by `(seed, stream_id, shape)`: the seed keys a
//! ChaCha8 generator and the stream id selects one of its 2^64 independent
//! streams. Stream ids are built with [`stream_id`] so that different uses
//! (per-step forward noise, marginal noise, sampler init, ...) at different
//! timesteps and sample indices never collide.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::image::{ImageTensor, Shape};

/// What a noise field is used for; occupies the top byte of a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NoisePurpose {
    /// Per-step ε_t of the stepwise forward chain.
    Forward = 1,
    /// Marginal ε̃_t of the direct forward jump.
    Marginal = 2,
    /// Fresh z of an ancestral reverse step.
    Posterior = 3,
    /// Initial state of the sampler.
    SamplerInit = 4,
    /// Re-noising at a pyramid scale change.
    ScaleLift = 5,
    /// Stochastic part of a DDIM step with σ > 0.
    Ddim = 6,
    /// Anything else (test inputs, fixtures).
    Auxiliary = 7,
}

/// Packs `(purpose, t, sample)` into a stream id:
/// 8 bits purpose, 16 bits timestep, 40 bits sample index.
pub const fn stream_id(purpose: NoisePurpose, t: usize, sample: u64) -> u64 {
    ((purpose as u64) << 56) | (((t as u64) & 0xFFFF) << 40) | (sample & 0xFF_FFFF_FFFF)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseDraw {
    pub seed: u64,
    pub stream_id: u64,
    pub shape: Shape,
}

impl NoiseDraw {
    pub const fn new(seed: u64, stream_id: u64, shape: Shape) -> Self {
        Self { seed, stream_id, shape }
    }

    pub const fn for_purpose(seed: u64, purpose: NoisePurpose, t: usize, sample: u64, shape: Shape) -> Self {
        Self::new(seed, stream_id(purpose, t, sample), shape)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Materializes the N(0, I) field.
    pub fn sample(&self) -> ImageTensor {
        let mut rng = self.rng();
        ImageTensor::from_fn(self.shape, |_, _, _| StandardNormal.sample(&mut rng))
    }
}
