#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sadm_core::{ImageTensor, Shape};

/// Uniform `[0, 1)` image from a seed.
pub fn random_image(seed: u64, shape: Shape) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::from_fn(shape, |_, _, _| rng.random::<f64>())
}

/// Standard-normal field from a seed, independent of the library's stream layout.
pub fn gaussian_image(seed: u64, shape: Shape) -> ImageTensor {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E_ED0F_6A55);
    ImageTensor::from_fn(shape, |_, _, _| StandardNormal.sample(&mut rng))
}

/// Reference coefficients computed straight from the definitions, one step at
/// a time and without any of the library's numerical shortcuts.
pub struct RefSchedule {
    pub k: Vec<f64>,
    pub a: Vec<f64>,
    pub b_sq: Vec<f64>,
}

impl RefSchedule {
    pub fn new(steps: usize, ratio: f64, b_start: f64, b_end: f64, ddpm: bool) -> Self {
        let mut k = vec![1.0];
        let mut a = vec![1.0];
        let mut b_sq = vec![0.0];
        for t in 1..=steps {
            let kt = if ddpm { 1.0 } else { ratio.powi(t as i32) };
            let b2 = if steps == 1 {
                b_start
            } else {
                b_start + (b_end - b_start) * (t - 1) as f64 / (steps - 1) as f64
            };
            let kp = k[t - 1];
            a.push(((kt * kt - b2) / (kp * kp * kp * kp)).sqrt());
            k.push(kt);
            b_sq.push(b2);
        }
        Self { k, a, b_sq }
    }

    pub fn signal_coef(&self, t: usize) -> f64 {
        (1..=t).map(|s| self.k[s] * self.a[s]).product()
    }

    /// `k_t^4 − (k̄_t ā_t)^2` by direct subtraction.
    pub fn noise_var_direct(&self, t: usize) -> f64 {
        self.k[t].powi(4) - self.signal_coef(t).powi(2)
    }
}
