mod common;

use common::random_image;
use proptest::prelude::*;
use sadm_core::quality::{
    bhattacharyya_coefficient, brightness_weight, gtmean_loss, l1, psnr, ssim, total_loss, AvgPoolExtractor,
    LossConfig, SsimParams,
};
use sadm_core::{ImageTensor, Shape};

// Fixture images built from integer patterns so any implementation can rebuild
// them exactly.
fn fixture_a(h: usize, w: usize, c: usize) -> ImageTensor {
    ImageTensor::from_fn(Shape::new(h, w, c), |y, x, ch| {
        ((y * 7 + x * 13 + ch * 5) % 17) as f64 / 16.0
    })
}

fn fixture_b(h: usize, w: usize, c: usize) -> ImageTensor {
    ImageTensor::from_fn(Shape::new(h, w, c), |y, x, ch| {
        ((y * 3 + x * 11 + ch * 7 + 4) % 19) as f64 / 18.0 * 0.8 + 0.1
    })
}

fn fixture_c(h: usize, w: usize, c: usize) -> ImageTensor {
    let a = fixture_a(h, w, c);
    ImageTensor::from_fn(a.shape(), |y, x, ch| {
        a.get(y, x, ch) * 0.9 + 0.05 + ((y * 5 + x * 3 + ch) % 7) as f64 / 140.0
    })
}

/// Reference values from scikit-image `structural_similarity` (Gaussian
/// weights, σ = 1.5, population covariance) and `peak_signal_noise_ratio`,
/// cross-checked against a direct windowed evaluation in numpy. The 8×8
/// pair uses a 7-tap window and was evaluated directly.
const FIXTURES: [(&str, f64, f64); 3] = [
    ("8x8x1 window 7", 0.3132423821170227, 8.725757280180073),
    ("16x16x3 a/b", -0.05841727227494083, 8.287397634478129),
    ("16x16x3 a/c", 0.992936258688338, 27.845685504627497),
];

fn fixture_pair(idx: usize) -> (ImageTensor, ImageTensor, SsimParams) {
    match idx {
        0 => (
            fixture_a(8, 8, 1),
            fixture_b(8, 8, 1),
            SsimParams {
                window: 7,
                ..Default::default()
            },
        ),
        1 => (fixture_a(16, 16, 3), fixture_b(16, 16, 3), SsimParams::default()),
        _ => (fixture_a(16, 16, 3), fixture_c(16, 16, 3), SsimParams::default()),
    }
}

/// Straightforward per-window SSIM with a 2-D Gaussian weight table.
#[allow(clippy::needless_range_loop)]
fn scalar_ssim(a: &ImageTensor, b: &ImageTensor, p: &SsimParams) -> f64 {
    let win = p.window;
    let centre = (win as f64 - 1.0) / 2.0;
    let mut weights = vec![vec![0.0; win]; win];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - centre).powi(2) + (j as f64 - centre).powi(2);
            *w = (-d2 / (2.0 * p.sigma * p.sigma)).exp();
            total += *w;
        }
    }
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let mut per_channel = 0.0;
    for c in 0..a.channels() {
        let mut sum = 0.0;
        let mut count = 0.0;
        for y0 in 0..=a.height() - win {
            for x0 in 0..=a.width() - win {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let w = weights[i][j] / total;
                        let (u, v) = (a.get(y0 + i, x0 + j, c), b.get(y0 + i, x0 + j, c));
                        ma += w * u;
                        mb += w * v;
                        saa += w * u * u;
                        sbb += w * v * v;
                        sab += w * u * v;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        per_channel += sum / count;
    }
    per_channel / a.channels() as f64
}

#[test]
fn metrics_match_reference_fixtures() {
    for (idx, (name, ref_ssim, ref_psnr)) in FIXTURES.iter().enumerate() {
        let (a, b, params) = fixture_pair(idx);
        let s = ssim(&a, &b, &params).unwrap();
        assert!((s - ref_ssim).abs() <= 1e-6, "{name}: ssim {s} vs {ref_ssim}");
        assert!(
            (s - scalar_ssim(&a, &b, &params)).abs() <= 1e-12,
            "{name}: scalar oracle"
        );
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - ref_psnr).abs() <= 1e-4, "{name}: psnr {p} vs {ref_psnr}");
    }
}

#[test]
fn ssim_is_symmetric_and_bounded() {
    for idx in 0..FIXTURES.len() {
        let (a, b, params) = fixture_pair(idx);
        let ab = ssim(&a, &b, &params).unwrap();
        let ba = ssim(&b, &a, &params).unwrap();
        assert!((ab - ba).abs() <= 1e-15);
        assert!((-1.0..=1.0).contains(&ab));
        assert_eq!(ssim(&a, &a, &params).unwrap(), 1.0);
    }
}

fn loss_inputs(seed: u64) -> (ImageTensor, ImageTensor, ImageTensor, ImageTensor) {
    let shape = Shape::new(12, 12, 3);
    let x0 = random_image(seed, shape);
    let x0_hat = random_image(seed.wrapping_add(1), shape).map(|v| 0.05 + 0.9 * v);
    let eps = random_image(seed.wrapping_add(2), shape).map(|v| 2.0 * v - 1.0);
    let eps_hat = random_image(seed.wrapping_add(3), shape).map(|v| 2.0 * v - 1.0);
    (x0_hat, x0, eps_hat, eps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weight_is_a_symmetric_similarity(seed in any::<u64>(), bins in 2usize..128) {
        let (fx, y, _, _) = loss_inputs(seed);
        let w = brightness_weight(&fx, &y, bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!((w - brightness_weight(&y, &fx, bins).unwrap()).abs() <= 1e-15);
        prop_assert!((brightness_weight(&y, &y, bins).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn coefficient_of_a_distribution_with_itself_is_one(raw in prop::collection::vec(0.0f64..1.0, 2..64)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        prop_assert!((bhattacharyya_coefficient(&p, &p) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn brightness_alignment_is_idempotent(seed in any::<u64>()) {
        let (fx, y, _, _) = loss_inputs(seed);
        let cfg = LossConfig::default();
        let first = gtmean_loss(&fx, &y, &cfg).unwrap();
        let aligned = fx.scale(first.lambda_gt);
        let second = gtmean_loss(&aligned, &y, &cfg).unwrap();
        prop_assert!((second.lambda_gt - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gtmean_vanishes_only_on_equality(seed in any::<u64>()) {
        let (fx, y, _, _) = loss_inputs(seed);
        let cfg = LossConfig::default();
        prop_assert_eq!(gtmean_loss(&y, &y, &cfg).unwrap().value, 0.0);
        prop_assert!(gtmean_loss(&fx, &y, &cfg).unwrap().value > 0.0);
    }

    #[test]
    fn total_loss_decomposes_exactly(seed in any::<u64>(), lambda_p in 0.0f64..1.0, w_original in 0.0f64..2.0) {
        let (x0_hat, x0, eps_hat, eps) = loss_inputs(seed);
        let cfg = LossConfig { lambda_p, w_original, ..Default::default() };
        let r = total_loss(&x0_hat, &x0, &eps_hat, &eps, &AvgPoolExtractor::default(), &cfg).unwrap();
        prop_assert_eq!(r.total, r.l_gt + r.l_p + r.l1_noise);
        prop_assert_eq!(r.l1_noise, l1(&eps_hat, &eps).unwrap());
        prop_assert!((0.0..=1.0).contains(&r.w_bhatt));
        let perfect = total_loss(&x0, &x0, &eps, &eps, &AvgPoolExtractor::default(), &cfg).unwrap();
        prop_assert_eq!(perfect.total, 0.0);
    }

    #[test]
    fn psnr_decreases_with_error(seed in any::<u64>(), d1 in 1e-4f64..0.2, extra in 1e-4f64..0.2) {
        let a = random_image(seed, Shape::new(5, 5, 3));
        let near = a.map(|v| v + d1);
        let far = a.map(|v| v + d1 + extra);
        prop_assert!(psnr(&a, &near, 1.0).unwrap() > psnr(&a, &far, 1.0).unwrap());
    }
}
