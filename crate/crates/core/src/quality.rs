//! Image quality metrics and the training losses.
//!
//! The total loss is
//!
//! ```text
//! L = L_GT(x̂_0, x_0) + L_P(x̂_0, x_0) + L1(ε̂, ε)
//! L_GT = W·L1(f, y) + (1 − W)·L1(λ·f, y),     λ = E[y] / E[f]
//! L_P  = λ_P · Σ_layer ω_layer · L1(φ_layer(x̂_0), φ_layer(x_0))
//! ```
//!
//! `W` is the Bhattacharyya coefficient `Σ sqrt(p_i q_i)` of the two luma
//! histograms, which lies in `[0, 1]` and equals `exp(−D_B)` for the
//! Bhattacharyya distance `D_B`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log10, sqrt};

use crate::error::{Error, Result};
use crate::image::{histogram, luminance, ImageTensor, Shape};

/// PSNR reported for identical images in serialized output.
pub const PSNR_CAP_DB: f64 = 99.0;

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// Mean absolute difference.
pub fn l1(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(peak² / MSE)`; `+∞` when the images are identical.
pub fn psnr(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * log10(peak * peak / err))
}

/// [`psnr`] capped at [`PSNR_CAP_DB`].
pub fn psnr_capped(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    Ok(psnr(a, b, peak)?.min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let centre = (window as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - centre;
            exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

// Separable "valid" filtering of a single plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().enumerate().map(|(i, k)| k * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel.iter().enumerate().map(|(i, k)| k * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Gaussian-windowed SSIM over the valid region (window fully inside the
/// image), computed per channel and averaged.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, params: &SsimParams) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let Shape {
        height: h,
        width: w,
        channels,
    } = a.shape();
    if params.window == 0 || h < params.window || w < params.window {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            window: params.window,
        });
    }
    let kernel = gaussian_kernel(params.window, params.sigma);
    let c1 = (params.k1 * params.peak) * (params.k1 * params.peak);
    let c2 = (params.k2 * params.peak) * (params.k2 * params.peak);

    let mut total = 0.0;
    for c in 0..channels {
        let pa: Vec<f64> = a.data().iter().skip(c).step_by(channels).copied().collect();
        let pb: Vec<f64> = b.data().iter().skip(c).step_by(channels).copied().collect();
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u * v).collect() };
        let mu_a = filter_valid(&pa, h, w, &kernel);
        let mu_b = filter_valid(&pb, h, w, &kernel);
        let e_aa = filter_valid(&prod(&pa, &pa), h, w, &kernel);
        let e_bb = filter_valid(&prod(&pb, &pb), h, w, &kernel);
        let e_ab = filter_valid(&prod(&pa, &pb), h, w, &kernel);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / channels as f64)
}

/// `Σ sqrt(p_i q_i)`, clipped to 1 against round-off.
pub fn bhattacharyya_coefficient(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| sqrt(a * b)).sum::<f64>().min(1.0)
}

/// Bhattacharyya coefficient of the luma histograms of two images.
pub fn brightness_weight(fx: &ImageTensor, y: &ImageTensor, bins: usize) -> Result<f64> {
    y.ensure_shape(fx.shape())?;
    let hf = histogram(&luminance(fx)?, 0, bins)?;
    let hy = histogram(&luminance(y)?, 0, bins)?;
    Ok(bhattacharyya_coefficient(&hf, &hy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the brightness-aligned L1 term as a whole.
    pub w_original: f64,
    /// Perception weight `λ_P`.
    pub lambda_p: f64,
    /// `(layer, ω_layer)` pairs.
    pub layer_weights: Vec<(String, f64)>,
    /// Histogram bins for the brightness weight.
    pub hist_bins: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            w_original: 1.0,
            lambda_p: 0.01,
            layer_weights: vec![("conv3_4".to_string(), 1.0), ("conv4_4".to_string(), 1.0)],
            hist_bins: 64,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_original >= 0.0) || !(self.lambda_p >= 0.0) || self.layer_weights.iter().any(|(_, w)| !(*w >= 0.0))
        {
            return Err(Error::InvalidLossConfig("weights must be non-negative"));
        }
        if self.hist_bins < 2 {
            return Err(Error::InvalidLossConfig("hist_bins must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtMeanLoss {
    pub value: f64,
    /// `E[y] / E[f]`.
    pub lambda_gt: f64,
    /// Bhattacharyya weight `W`.
    pub w: f64,
}

/// Brightness-aligned L1 loss between a prediction `fx` and target `y`.
pub fn gtmean_loss(fx: &ImageTensor, y: &ImageTensor, config: &LossConfig) -> Result<GtMeanLoss> {
    config.validate()?;
    y.ensure_shape(fx.shape())?;
    let mean_fx = fx.mean();
    let lambda_gt = y.mean() / mean_fx;
    if mean_fx == 0.0 || !lambda_gt.is_finite() {
        return Err(Error::DegenerateMean);
    }
    let w = brightness_weight(fx, y, config.hist_bins)?;
    let plain = l1(fx, y)?;
    let aligned = l1(&fx.scale(lambda_gt), y)?;
    Ok(GtMeanLoss {
        value: w * plain + (1.0 - w) * aligned,
        lambda_gt,
        w,
    })
}

/// Source of per-layer feature maps for the perception loss.
pub trait FeatureExtractor {
    fn features(&self, img: &ImageTensor, layer: &str) -> Result<ImageTensor>;
}

impl<F: FeatureExtractor + ?Sized> FeatureExtractor for &F {
    fn features(&self, img: &ImageTensor, layer: &str) -> Result<ImageTensor> {
        (**self).features(img, layer)
    }
}

/// Stand-in extractor: each layer is an average pool with a fixed stride
/// (edge windows average whatever samples they cover).
#[derive(Debug, Clone, PartialEq)]
pub struct AvgPoolExtractor {
    pub layers: Vec<(String, usize)>,
}

impl Default for AvgPoolExtractor {
    fn default() -> Self {
        Self {
            layers: vec![("conv3_4".to_string(), 4), ("conv4_4".to_string(), 8)],
        }
    }
}

impl AvgPoolExtractor {
    /// Every known layer pools by `factor`.
    pub fn uniform(factor: usize) -> Self {
        let mut e = Self::default();
        e.layers.iter_mut().for_each(|(_, f)| *f = factor);
        e
    }
}

fn average_pool(img: &ImageTensor, factor: usize) -> ImageTensor {
    let Shape {
        height: h,
        width: w,
        channels: ch,
    } = img.shape();
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    ImageTensor::from_fn(Shape::new(oh, ow, ch), |y, x, c| {
        let (y0, x0) = (y * factor, x * factor);
        let (y1, x1) = ((y0 + factor).min(h), (x0 + factor).min(w));
        let mut sum = 0.0;
        for yy in y0..y1 {
            for xx in x0..x1 {
                sum += img.get(yy, xx, c);
            }
        }
        sum / ((y1 - y0) * (x1 - x0)) as f64
    })
}

impl FeatureExtractor for AvgPoolExtractor {
    fn features(&self, img: &ImageTensor, layer: &str) -> Result<ImageTensor> {
        let (_, factor) = self
            .layers
            .iter()
            .find(|(name, _)| name == layer)
            .ok_or_else(|| Error::Extractor(alloc::format!("unknown layer {layer}")))?;
        if *factor == 0 {
            return Err(Error::Extractor(alloc::format!("layer {layer} has zero stride")));
        }
        Ok(average_pool(img, *factor))
    }
}

/// `λ_P · Σ ω_layer · L1(φ(fx), φ(y))`.
pub fn perception_loss<F: FeatureExtractor + ?Sized>(
    fx: &ImageTensor,
    y: &ImageTensor,
    extractor: &F,
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    y.ensure_shape(fx.shape())?;
    let mut sum = 0.0;
    for (layer, weight) in &config.layer_weights {
        let a = extractor.features(fx, layer)?;
        let b = extractor.features(y, layer)?;
        sum += weight * l1(&a, &b)?;
    }
    Ok(config.lambda_p * sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_gt: f64,
    pub l_p: f64,
    pub l1_noise: f64,
    /// `l_gt + l_p + l1_noise`.
    pub total: f64,
    pub w_bhatt: f64,
    pub lambda_gt: f64,
}

pub fn total_loss<F: FeatureExtractor + ?Sized>(
    x0_hat: &ImageTensor,
    x0: &ImageTensor,
    eps_hat: &ImageTensor,
    eps: &ImageTensor,
    extractor: &F,
    config: &LossConfig,
) -> Result<LossReport> {
    let gt = gtmean_loss(x0_hat, x0, config)?;
    let l_gt = config.w_original * gt.value;
    let l_p = perception_loss(x0_hat, x0, extractor, config)?;
    let l1_noise = l1(eps_hat, eps)?;
    Ok(LossReport {
        l_gt,
        l_p,
        l1_noise,
        total: l_gt + l_p + l1_noise,
        w_bhatt: gt.w,
        lambda_gt: gt.lambda_gt,
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
            i / n
        })
    }

    #[test]
    fn psnr_closed_forms() {
        let a = ImageTensor::filled(Shape::new(8, 8, 3), 0.4);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(psnr_capped(&a, &a, 1.0).unwrap(), 99.0);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 0.01);
        assert!((psnr(&a, &c, 1.0).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&a, &ImageTensor::zeros(Shape::new(8, 8, 1)), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let a = ramp(Shape::new(16, 16, 3));
        assert_eq!(ssim(&a, &a, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_anticorrelated_binary_is_negative() {
        let a = ImageTensor::from_fn(Shape::new(16, 16, 1), |y, x, _| ((x / 2 + y / 3) % 2) as f64);
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &b, &SsimParams::default()).unwrap() < 0.0);
    }

    #[test]
    fn ssim_window_checks() {
        let a = ImageTensor::zeros(Shape::new(8, 8, 1));
        assert!(matches!(
            ssim(&a, &a, &SsimParams::default()),
            Err(Error::ImageTooSmall { .. })
        ));
        let small = SsimParams {
            window: 7,
            ..Default::default()
        };
        assert!(ssim(&a, &a, &small).is_ok());
    }

    #[test]
    fn bhattacharyya_bounds() {
        let p = [0.25, 0.25, 0.5];
        assert_eq!(bhattacharyya_coefficient(&p, &p), 1.0);
        assert_eq!(bhattacharyya_coefficient(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn gtmean_identical_is_zero() {
        let y = ramp(Shape::new(8, 8, 3));
        let r = gtmean_loss(&y, &y, &LossConfig::default()).unwrap();
        assert_eq!((r.value, r.lambda_gt, r.w), (0.0, 1.0, 1.0));
    }

    #[test]
    fn gtmean_half_brightness() {
        let y = ramp(Shape::new(8, 8, 3));
        let fx = y.scale(0.5);
        let r = gtmean_loss(&fx, &y, &LossConfig::default()).unwrap();
        assert!((r.lambda_gt - 2.0).abs() < 1e-12);
        assert!(r.w < 1.0);
        let expected = r.w * l1(&fx, &y).unwrap();
        assert!((r.value - expected).abs() < 1e-12);
    }

    #[test]
    fn gtmean_disjoint_support() {
        let shape = Shape::new(4, 4, 3);
        let fx = ImageTensor::filled(shape, 0.1);
        let y = ImageTensor::filled(shape, 0.9);
        let r = gtmean_loss(&fx, &y, &LossConfig::default()).unwrap();
        assert_eq!(r.w, 0.0);
        assert!((r.value - l1(&fx.scale(r.lambda_gt), &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn gtmean_degenerate_mean() {
        let shape = Shape::new(4, 4, 3);
        let r = gtmean_loss(
            &ImageTensor::zeros(shape),
            &ImageTensor::filled(shape, 0.5),
            &LossConfig::default(),
        );
        assert_eq!(r, Err(Error::DegenerateMean));
    }

    #[test]
    fn perception_closed_forms() {
        let cfg = LossConfig::default();
        let ex = AvgPoolExtractor::default();
        let y = ramp(Shape::new(16, 16, 3));
        assert_eq!(perception_loss(&y, &y, &ex, &cfg).unwrap(), 0.0);
        let delta = 0.05;
        let fx = y.map(|v| v + delta);
        let expected = cfg.lambda_p * 2.0 * delta;
        assert!((perception_loss(&fx, &y, &ex, &cfg).unwrap() - expected).abs() < 1e-12);
        let off = LossConfig {
            lambda_p: 0.0,
            ..Default::default()
        };
        assert_eq!(perception_loss(&fx, &y, &ex, &off).unwrap(), 0.0);
    }

    #[test]
    fn unknown_layer_propagates() {
        let cfg = LossConfig {
            layer_weights: vec![("conv5_4".into(), 1.0)],
            ..Default::default()
        };
        let y = ramp(Shape::new(8, 8, 3));
        assert!(matches!(
            perception_loss(&y, &y, &AvgPoolExtractor::default(), &cfg),
            Err(Error::Extractor(_))
        ));
    }

    #[test]
    fn pooling_handles_ragged_edges() {
        let img = ramp(Shape::new(5, 5, 1));
        let p = average_pool(&img, 4);
        assert_eq!(p.shape(), Shape::new(2, 2, 1));
        assert_eq!(p.get(1, 1, 0), img.get(4, 4, 0));
    }

    #[test]
    fn total_loss_cases() {
        let cfg = LossConfig::default();
        let ex = AvgPoolExtractor::default();
        let x0 = ramp(Shape::new(8, 8, 3));
        let eps = x0.map(|v| v - 0.5);
        let r = total_loss(&x0, &x0, &eps, &eps, &ex, &cfg).unwrap();
        assert_eq!(r.total, 0.0);
        let eps_hat = eps.map(|v| v + 0.1);
        let r = total_loss(&x0, &x0, &eps_hat, &eps, &ex, &cfg).unwrap();
        assert!((r.total - 0.1).abs() < 1e-12);
        assert_eq!(r.total, r.l_gt + r.l_p + r.l1_noise);
    }

    #[test]
    fn config_validation() {
        let mut cfg = LossConfig {
            hist_bins: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.hist_bins = 8;
        cfg.lambda_p = -1.0;
        assert!(cfg.validate().is_err());
    }
}
