//! Signal-attenuation diffusion for low-light image enhancement.
//!
//! The forward process attenuates both the signal and the injected noise,
//! `x_t = k_t (a_t x_{t-1} + b_t ε_t)`, so that images in `[0, 1]` decay
//! towards a dark, noisy state instead of unit-variance noise. This crate
//! holds the numerics:
//!
//! * [`schedule`]: the noise schedule under the recurrence
//!   `k_{t-1}^4 a_t^2 + b_t^2 = k_t^2`
//! * [`diffusion`]: forward noising, `x_0` recovery and the closed-form posterior
//! * [`sampler`]: generalized DDIM jumps, the denoiser contract and pyramid sampling
//! * [`prior`]: dehaze prior, histogram equalization and positional channels
//! * [`quality`]: PSNR, SSIM and the training losses
//! * [`image`] and [`noise`]: the tensor type and reproducible Gaussian fields
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the `sadm` crate.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod diffusion;
pub mod error;
pub mod image;
pub mod noise;
pub mod prior;
pub mod quality;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};
pub use image::{ImageTensor, Shape};
pub use noise::{NoiseDraw, NoisePurpose};
pub use schedule::{NoiseSchedule, ScheduleConfig};
