//! Conditioning inputs for the denoiser: the dehaze prior, histogram
//! equalization as its alternative, and coordinate channels.
//!
//! The dehaze prior treats the inverted low-light image `X_Ld = 1 − X_L` as
//! haze and inverts the atmospheric scattering model with `A = 1` and
//! transmission
//!
//! ```text
//! T_r = t0 + ω·(1 − ω·min_c X_Ld^c),   t0 = mean(X_L),   ω = 1 − t0
//! ```
//!
//! Invert, dehaze and re-invert collapse to a single division,
//! `X_E = X_L / T_r`. The minimum is taken per pixel over RGB with no spatial
//! window. `t0` is the mean over all pixels and channels.

use alloc::vec;
use core::f64::consts::PI;

use libm::{cos, pow, sin};

use crate::error::{Error, Result};
use crate::image::{bin_index, rgb_to_ycbcr, ycbcr_to_rgb, ImageTensor, Shape};
use crate::sampler::ConditionStack;

/// Default train-time luminance gamma (brightening).
pub const DEFAULT_GAMMA: f64 = 1.0 / 2.2;

/// Number of levels used by [`hist_equalize`].
pub const HIST_EQ_LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DehazeParams {
    /// Global mean of the low-light image.
    pub t0: f64,
    /// Fidelity coefficient `1 − t0`.
    pub omega: f64,
    /// Atmospheric light, fixed at 1.
    pub atmospheric_light: f64,
}

impl DehazeParams {
    pub fn from_image(x_low: &ImageTensor) -> Self {
        let t0 = x_low.mean();
        Self {
            t0,
            omega: 1.0 - t0,
            atmospheric_light: 1.0,
        }
    }

    /// `T_r` for a pixel whose inverted channels have minimum `min_inverted`.
    #[inline]
    pub fn transmission(&self, min_inverted: f64) -> f64 {
        self.t0 + self.omega * (1.0 - self.omega * min_inverted)
    }
}

/// `X_L / T_r` per pixel, before any clamping.
///
/// An all-black input has `T_r = 0` everywhere; it maps to black.
pub fn dehaze_raw(x_low: &ImageTensor) -> Result<ImageTensor> {
    x_low.ensure_channels(3)?;
    let params = DehazeParams::from_image(x_low);
    let mut out = x_low.map(|v| v);
    for px in out.data_mut().chunks_exact_mut(3) {
        let min_inv = px.iter().map(|v| 1.0 - v).fold(f64::INFINITY, f64::min);
        let tr = params.transmission(min_inv);
        for v in px.iter_mut() {
            *v = if tr > 0.0 { *v / tr } else { 0.0 };
        }
    }
    Ok(out)
}

/// The dehaze prior, clamped to `[0, 1]`. In training mode the luminance is
/// additionally gamma-corrected (`Y ← Y^γ` in YCbCr) and the result clamped
/// again.
pub fn dehaze_prior(x_low: &ImageTensor, train_mode: bool, gamma: f64) -> Result<ImageTensor> {
    let enhanced = dehaze_raw(x_low)?.clamp01();
    if !train_mode {
        return Ok(enhanced);
    }
    let mut ycc = rgb_to_ycbcr(&enhanced)?;
    for px in ycc.data_mut().chunks_exact_mut(3) {
        px[0] = pow(px[0].max(0.0), gamma);
    }
    Ok(ycbcr_to_rgb(&ycc)?.clamp01())
}

/// Per-channel histogram equalization over 256 levels: each sample maps to the
/// cumulative mass of its level, so the mapping is monotone and lands in
/// `(0, 1]`.
pub fn hist_equalize(x: &ImageTensor) -> Result<ImageTensor> {
    let ch = x.channels();
    if ch != 1 && ch != 3 {
        return Err(Error::ChannelMismatch { expected: 3, found: ch });
    }
    let n = (x.height() * x.width()) as f64;
    let mut cdfs = vec![[0.0f64; HIST_EQ_LEVELS]; ch];
    for px in x.data().chunks_exact(ch) {
        for (c, &v) in px.iter().enumerate() {
            cdfs[c][bin_index(v, HIST_EQ_LEVELS)] += 1.0;
        }
    }
    for cdf in &mut cdfs {
        let mut acc = 0.0;
        for v in cdf.iter_mut() {
            acc += *v;
            *v = acc / n;
        }
    }
    let mut out = x.map(|v| v);
    for px in out.data_mut().chunks_exact_mut(ch) {
        for (c, v) in px.iter_mut().enumerate() {
            *v = cdfs[c][bin_index(*v, HIST_EQ_LEVELS)];
        }
    }
    Ok(out)
}

/// Coordinate channels on an `h × w` grid.
///
/// * 2: normalized `row, col` in `[0, 1]` (corners hit 0 and 1 exactly)
/// * 4: adds `1 − row, 1 − col`
/// * 10: adds `sin(2πf·row), cos(2πf·col)` for `f = 1, 2, 4`
///
/// Coordinates are functions of the normalized position only, so a resized
/// grid samples the same functions.
pub fn position_channels(h: usize, w: usize, n_channels: usize) -> Result<ImageTensor> {
    if !matches!(n_channels, 2 | 4 | 10) {
        return Err(Error::UnsupportedPositionChannels(n_channels));
    }
    if h == 0 || w == 0 {
        return Err(Error::InvalidDimension("grid dimensions must be positive"));
    }
    let norm = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    Ok(ImageTensor::from_fn(Shape::new(h, w, n_channels), |y, x, c| {
        let row = norm(y, h);
        let col = norm(x, w);
        match c {
            0 => row,
            1 => col,
            2 => 1.0 - row,
            3 => 1.0 - col,
            _ => {
                let k = c - 4;
                let freq = (1u32 << (k / 2)) as f64;
                if k % 2 == 0 {
                    sin(2.0 * PI * freq * row)
                } else {
                    cos(2.0 * PI * freq * col)
                }
            }
        }
    }))
}

/// Which prior image goes into the condition stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorKind {
    #[default]
    Dehaze,
    HistEq,
    /// No prior channels at all.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionConfig {
    pub prior: PriorKind,
    pub train_mode: bool,
    pub gamma: f64,
    pub pos_channels: usize,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            prior: PriorKind::Dehaze,
            train_mode: false,
            gamma: DEFAULT_GAMMA,
            pos_channels: 4,
        }
    }
}

/// Builds `{low, pos, prior}` for a low-light RGB image.
pub fn assemble_condition(x_low: &ImageTensor, config: &ConditionConfig) -> Result<ConditionStack> {
    x_low.ensure_channels(3)?;
    let pos = position_channels(x_low.height(), x_low.width(), config.pos_channels)?;
    let prior = match config.prior {
        PriorKind::Dehaze => Some(dehaze_prior(x_low, config.train_mode, config.gamma)?),
        PriorKind::HistEq => Some(hist_equalize(x_low)?),
        PriorKind::Disabled => None,
    };
    ConditionStack::new(x_low.clone(), pos, prior)
}
