//! H×W×C real-valued image tensors and the handful of image operations the
//! diffusion pipeline needs: resampling, BT.601 YCbCr, histograms, cropping
//! and reflective padding.
//!
//! Pixel-valued tensors live in `[0, 1]`. Noised tensors are allowed to leave
//! that range; nothing here clamps implicitly; [`ImageTensor::clamp01`] is the
//! only operation that does, and it records that it did.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::floor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// Number of scalar samples, `H·W·C`.
    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn with_channels(self, channels: usize) -> Self {
        Self { channels, ..self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Row-major, channel-interleaved image: sample `(y, x, c)` lives at
/// `(y·W + x)·C + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
    clamped: bool,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(Shape::new(height, width, channels), data)
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.height == 0 || shape.width == 0 || shape.channels == 0 {
            return Err(Error::InvalidDimension("height, width and channels must be positive"));
        }
        if data.len() != shape.len() {
            return Err(Error::DataLength { len: data.len(), shape });
        }
        Ok(Self {
            shape,
            data,
            clamped: false,
        })
    }

    /// Panics if any dimension is zero.
    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(!shape.is_empty(), "image dimensions must be positive");
        Self {
            shape,
            data: vec![value; shape.len()],
            clamped: false,
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Builds an image by evaluating `f(y, x, c)` for every sample.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        assert!(!shape.is_empty(), "image dimensions must be positive");
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            shape,
            data,
            clamped: false,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Whether [`clamp01`](Self::clamp01) produced this tensor.
    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.width + x) * self.shape.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.index(y, x, c);
        self.data[i] = value;
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: self.shape,
            });
        }
        Ok(())
    }

    pub fn ensure_channels(&self, expected: usize) -> Result<()> {
        if self.shape.channels != expected {
            return Err(Error::ChannelMismatch {
                expected,
                found: self.shape.channels,
            });
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            clamped: false,
        }
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        other.ensure_shape(self.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            clamped: false,
        })
    }

    /// `alpha·self + beta·other`.
    pub fn lin_comb(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.zip_map(other, |a, b| alpha * a + beta * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Mean of `v²` over all samples.
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        other.ensure_shape(self.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn clamp01(&self) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            clamped: true,
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Extracts a single channel as a one-channel tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        if c >= self.shape.channels {
            return Err(Error::ChannelMismatch {
                expected: c + 1,
                found: self.shape.channels,
            });
        }
        let data = self.data.chunks_exact(self.shape.channels).map(|px| px[c]).collect();
        Ok(Self {
            shape: self.shape.with_channels(1),
            data,
            clamped: self.clamped,
        })
    }

    /// Concatenates tensors of equal height and width along the channel axis.
    pub fn stack_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or(Error::InvalidDimension("cannot stack zero tensors"))?;
        let (h, w) = (first.height(), first.width());
        let mut channels = 0;
        for p in parts {
            if p.height() != h || p.width() != w {
                return Err(Error::ShapeMismatch {
                    expected: Shape::new(h, w, p.channels()),
                    found: p.shape(),
                });
            }
            channels += p.channels();
        }
        let mut data = Vec::with_capacity(h * w * channels);
        for px in 0..h * w {
            for p in parts {
                let c = p.channels();
                data.extend_from_slice(&p.data[px * c..(px + 1) * c]);
            }
        }
        Ok(Self {
            shape: Shape::new(h, w, channels),
            data,
            clamped: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeMode {
    Nearest,
    #[default]
    Bilinear,
}

/// Resamples to `new_h × new_w`.
///
/// Nearest uses `floor(i·in/out)`. Bilinear samples at half-pixel centres with
/// edge clamping, except that an exact integer downscale on both axes is done
/// by box averaging.
pub fn resize(img: &ImageTensor, new_h: usize, new_w: usize, mode: ResizeMode) -> Result<ImageTensor> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidDimension("target dimensions must be positive"));
    }
    let (h, w) = (img.height(), img.width());
    if new_h == h && new_w == w {
        return Ok(img.clone());
    }
    let out_shape = Shape::new(new_h, new_w, img.channels());
    match mode {
        ResizeMode::Nearest => Ok(ImageTensor::from_fn(out_shape, |y, x, c| {
            img.get(y * h / new_h, x * w / new_w, c)
        })),
        ResizeMode::Bilinear => {
            if h % new_h == 0 && w % new_w == 0 {
                return box_downscale_xy(img, h / new_h, w / new_w);
            }
            let ys: Vec<_> = (0..new_h).map(|i| source_coord(i, h, new_h)).collect();
            let xs: Vec<_> = (0..new_w).map(|i| source_coord(i, w, new_w)).collect();
            Ok(ImageTensor::from_fn(out_shape, |y, x, c| {
                let (y0, y1, fy) = ys[y];
                let (x0, x1, fx) = xs[x];
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                top * (1.0 - fy) + bottom * fy
            }))
        }
    }
}

// Half-pixel aligned source position, clamped to the edge samples.
fn source_coord(i: usize, len_in: usize, len_out: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5).clamp(0.0, (len_in - 1) as f64);
    let i0 = floor(pos) as usize;
    let i1 = (i0 + 1).min(len_in - 1);
    (i0, i1, pos - i0 as f64)
}

/// Box-average downscale by an integer factor on both axes.
pub fn box_downscale(img: &ImageTensor, factor: usize) -> Result<ImageTensor> {
    box_downscale_xy(img, factor, factor)
}

fn box_downscale_xy(img: &ImageTensor, fy: usize, fx: usize) -> Result<ImageTensor> {
    if fy == 0 || fx == 0 {
        return Err(Error::InvalidDimension("downscale factor must be positive"));
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    if h % fy != 0 || w % fx != 0 {
        return Err(Error::NotDivisible {
            height: h,
            width: w,
            factor: if h % fy != 0 { fy } else { fx },
        });
    }
    if fy == 1 && fx == 1 {
        return Ok(img.clone());
    }
    let (oh, ow) = (h / fy, w / fx);
    let norm = 1.0 / (fy * fx) as f64;
    let mut out = ImageTensor::zeros(Shape::new(oh, ow, ch));
    for y in 0..h {
        for x in 0..w {
            let dst = out.index(y / fy, x / fx, 0);
            let src = img.index(y, x, 0);
            for c in 0..ch {
                out.data[dst + c] += img.data[src + c];
            }
        }
    }
    out.data.iter_mut().for_each(|v| *v *= norm);
    Ok(out)
}

// BT.601 full-range luma weights.
const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// BT.601 luma of an RGB triple.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    KR * r + KG * g + KB * b
}

/// BT.601 full-range RGB → YCbCr with chroma centred at 0.5:
///
/// ```text
/// Y  = 0.299 R + 0.587 G + 0.114 B
/// Cb = 0.5 + (B − Y) / 1.772
/// Cr = 0.5 + (R − Y) / 1.402
/// ```
pub fn rgb_to_ycbcr(img: &ImageTensor) -> Result<ImageTensor> {
    img.ensure_channels(3)?;
    let mut out = img.clone();
    out.clamped = false;
    for px in out.data.chunks_exact_mut(3) {
        let (r, g, b) = (px[0], px[1], px[2]);
        let y = luma(r, g, b);
        px[0] = y;
        px[1] = 0.5 + (b - y) / (2.0 * (1.0 - KB));
        px[2] = 0.5 + (r - y) / (2.0 * (1.0 - KR));
    }
    Ok(out)
}

/// Exact inverse of [`rgb_to_ycbcr`].
pub fn ycbcr_to_rgb(img: &ImageTensor) -> Result<ImageTensor> {
    img.ensure_channels(3)?;
    let mut out = img.clone();
    out.clamped = false;
    for px in out.data.chunks_exact_mut(3) {
        let (y, cb, cr) = (px[0], px[1], px[2]);
        let r = y + 2.0 * (1.0 - KR) * (cr - 0.5);
        let b = y + 2.0 * (1.0 - KB) * (cb - 0.5);
        let g = (y - KR * r - KB * b) / KG;
        px[0] = r;
        px[1] = g;
        px[2] = b;
    }
    Ok(out)
}

/// One-channel brightness: BT.601 luma for colour inputs (the first three
/// channels are taken as RGB), the image itself for grayscale.
pub fn luminance(img: &ImageTensor) -> Result<ImageTensor> {
    match img.channels() {
        1 => Ok(img.clone()),
        2 => img.channel(0),
        ch => {
            let data = img.data.chunks_exact(ch).map(|px| luma(px[0], px[1], px[2])).collect();
            ImageTensor::from_vec(img.shape.with_channels(1), data)
        }
    }
}

/// Bin index over `[0, 1]` with `bins` uniform bins. Values outside the range
/// fall into the edge bins; exactly 1.0 lands in the last bin.
#[inline]
pub fn bin_index(value: f64, bins: usize) -> usize {
    if !(value > 0.0) {
        return 0;
    }
    ((value * bins as f64) as usize).min(bins - 1)
}

/// Normalized histogram of one channel over `[0, 1]`.
pub fn histogram(img: &ImageTensor, channel: usize, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::InvalidDimension("histogram needs at least two bins"));
    }
    if channel >= img.channels() {
        return Err(Error::ChannelMismatch {
            expected: channel + 1,
            found: img.channels(),
        });
    }
    let mut counts = vec![0.0; bins];
    for px in img.data.chunks_exact(img.channels()) {
        counts[bin_index(px[channel], bins)] += 1.0;
    }
    let n = (img.height() * img.width()) as f64;
    counts.iter_mut().for_each(|v| *v /= n);
    Ok(counts)
}

/// Copies the `w × h` window whose top-left corner is `(x, y)`.
pub fn crop(img: &ImageTensor, x: usize, y: usize, w: usize, h: usize) -> Result<ImageTensor> {
    if w == 0 || h == 0 || x + w > img.width() || y + h > img.height() {
        return Err(Error::CropOutOfBounds {
            x,
            y,
            w,
            h,
            shape: img.shape(),
        });
    }
    let ch = img.channels();
    let mut data = Vec::with_capacity(w * h * ch);
    for row in y..y + h {
        let start = img.index(row, x, 0);
        data.extend_from_slice(&img.data[start..start + w * ch]);
    }
    ImageTensor::new(h, w, ch, data)
}

/// A reflect-padded image together with the dimensions it was padded from.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub image: ImageTensor,
    pub original_height: usize,
    pub original_width: usize,
}

impl Padded {
    /// Crops any image of the padded size back to the original dimensions.
    pub fn unpad(&self, img: &ImageTensor) -> Result<ImageTensor> {
        if img.height() != self.image.height() || img.width() != self.image.width() {
            return Err(Error::ShapeMismatch {
                expected: self.image.shape().with_channels(img.channels()),
                found: img.shape(),
            });
        }
        crop(img, 0, 0, self.original_width, self.original_height)
    }
}

// Mirror index without repeating the edge sample (…2 1 0 1 2…), periodic.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Grows the bottom and right edges so both dimensions become multiples of `m`.
/// Original content stays at the top-left.
pub fn pad_to_multiple(img: &ImageTensor, m: usize) -> Result<Padded> {
    if m == 0 {
        return Err(Error::InvalidDimension("padding multiple must be positive"));
    }
    let (h, w) = (img.height(), img.width());
    let ph = h.div_ceil(m) * m;
    let pw = w.div_ceil(m) * m;
    let image = ImageTensor::from_fn(Shape::new(ph, pw, img.channels()), |y, x, c| {
        img.get(reflect(y, h), reflect(x, w), c)
    });
    Ok(Padded {
        image,
        original_height: h,
        original_width: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: Shape) -> ImageTensor {
        let n = shape.len() as f64;
        let mut i = 0.0;
        ImageTensor::from_fn(shape, |_, _, _| {
            i += 1.0;
            (i - 1.0) / (n - 1.0)
        })
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            ImageTensor::new(2, 2, 3, vec![0.0; 11]),
            Err(Error::DataLength { .. })
        ));
        assert!(ImageTensor::new(0, 2, 3, vec![]).is_err());
    }

    #[test]
    fn constant_survives_every_resize() {
        let img = ImageTensor::filled(Shape::new(7, 5, 3), 0.37);
        for (h, w) in [(14, 10), (3, 3), (7, 1), (1, 5), (21, 15)] {
            for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
                let out = resize(&img, h, w, mode).unwrap();
                assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn checkerboard_box_mean() {
        let img = ImageTensor::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = resize(&img, 1, 1, ResizeMode::Bilinear).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn nearest_floor_rule() {
        let img = ImageTensor::new(1, 3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let up = resize(&img, 1, 6, ResizeMode::Nearest).unwrap();
        assert_eq!(up.data(), &[0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
        let down = resize(&img, 1, 2, ResizeMode::Nearest).unwrap();
        // floor(0·3/2)=0, floor(1·3/2)=1
        assert_eq!(down.data(), &[0.0, 0.5]);
    }

    #[test]
    fn zero_target_rejected() {
        let img = ImageTensor::zeros(Shape::new(2, 2, 1));
        assert!(resize(&img, 0, 2, ResizeMode::Bilinear).is_err());
    }

    #[test]
    fn ycbcr_reference_points() {
        let white = ImageTensor::filled(Shape::new(1, 1, 3), 1.0);
        let y = rgb_to_ycbcr(&white).unwrap();
        assert!((y.get(0, 0, 0) - 1.0).abs() < 1e-15);
        assert!((y.get(0, 0, 1) - 0.5).abs() < 1e-15);
        assert!((y.get(0, 0, 2) - 0.5).abs() < 1e-15);
        let black = ImageTensor::zeros(Shape::new(1, 1, 3));
        let y = rgb_to_ycbcr(&black).unwrap();
        assert_eq!(y.data(), &[0.0, 0.5, 0.5]);
        // Pure red: Cr at its maximum 1.0.
        let red = ImageTensor::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let y = rgb_to_ycbcr(&red).unwrap();
        assert!((y.get(0, 0, 0) - 0.299).abs() < 1e-15);
        assert!((y.get(0, 0, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ycbcr_needs_three_channels() {
        let gray = ImageTensor::zeros(Shape::new(2, 2, 1));
        assert_eq!(
            rgb_to_ycbcr(&gray),
            Err(Error::ChannelMismatch { expected: 3, found: 1 })
        );
        assert!(ycbcr_to_rgb(&gray).is_err());
    }

    #[test]
    fn histogram_edges() {
        let zeros = ImageTensor::zeros(Shape::new(4, 4, 1));
        let h = histogram(&zeros, 0, 8).unwrap();
        assert_eq!(h[0], 1.0);
        assert!(h[1..].iter().all(|&v| v == 0.0));

        let ones = ImageTensor::filled(Shape::new(4, 4, 1), 1.0);
        let h = histogram(&ones, 0, 8).unwrap();
        assert_eq!(h[7], 1.0);
        assert!(h[..7].iter().all(|&v| v == 0.0));

        assert!(histogram(&ones, 0, 1).is_err());
        assert!(histogram(&ones, 1, 8).is_err());
    }

    #[test]
    fn histogram_of_uniform_ramp() {
        let n = 1000;
        let img = ramp(Shape::new(1, n, 1));
        let h = histogram(&img, 0, 4).unwrap();
        for p in h {
            assert!((p - 0.25).abs() <= 1.0 / n as f64, "{p}");
        }
    }

    #[test]
    fn crop_full_frame_is_identity() {
        let img = ramp(Shape::new(5, 6, 3));
        assert_eq!(crop(&img, 0, 0, 6, 5).unwrap(), img);
        assert!(matches!(crop(&img, 1, 0, 6, 5), Err(Error::CropOutOfBounds { .. })));
    }

    #[test]
    fn crop_window_content() {
        let img = ramp(Shape::new(4, 4, 1));
        let c = crop(&img, 1, 2, 2, 1).unwrap();
        assert_eq!(c.data(), &[img.get(2, 1, 0), img.get(2, 2, 0)]);
    }

    #[test]
    fn pad_grows_bottom_right_only() {
        let img = ramp(Shape::new(30, 30, 3));
        let p = pad_to_multiple(&img, 32).unwrap();
        assert_eq!(p.image.shape(), Shape::new(32, 32, 3));
        assert_eq!(crop(&p.image, 0, 0, 30, 30).unwrap(), img);
        // Reflection without repeating the edge: row 30 mirrors row 28.
        assert_eq!(p.image.get(30, 3, 1), img.get(28, 3, 1));
        assert_eq!(p.image.get(31, 31, 0), img.get(27, 27, 0));
    }

    #[test]
    fn pad_larger_than_image_reflects_periodically() {
        let img = ImageTensor::new(1, 3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let p = pad_to_multiple(&img, 8).unwrap();
        let row: Vec<f64> = (0..8).map(|x| p.image.get(0, x, 0)).collect();
        assert_eq!(row, vec![0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0, 0.5]);
        let single = ImageTensor::filled(Shape::new(1, 1, 1), 0.25);
        let p = pad_to_multiple(&single, 4).unwrap();
        assert!(p.image.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn stack_and_split_channels() {
        let a = ramp(Shape::new(2, 3, 3));
        let b = ImageTensor::filled(Shape::new(2, 3, 1), 9.0);
        let s = ImageTensor::stack_channels(&[&a, &b]).unwrap();
        assert_eq!(s.channels(), 4);
        assert_eq!(s.channel(3).unwrap(), b);
        assert_eq!(s.get(1, 2, 1), a.get(1, 2, 1));
        let bad = ImageTensor::zeros(Shape::new(3, 3, 1));
        assert!(ImageTensor::stack_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn clamp_sets_flag() {
        let img = ImageTensor::new(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert!(!img.is_clamped());
        let c = img.clamp01();
        assert!(c.is_clamped());
        assert_eq!(c.data(), &[0.0, 1.0]);
    }
}
