//! Forward noising, `x_0` recovery and the closed-form posterior
//! `q(x_{t-1} | x_t, x_0)` of the attenuated process.
//!
//! Nothing here clamps; noised tensors routinely leave `[0, 1]`.
//!
//! The ancestral step is kept for checking the posterior algebra. Deployment
//! sampling goes through [`crate::sampler`].

use libm::sqrt;

use crate::error::Result;
use crate::image::ImageTensor;
use crate::schedule::NoiseSchedule;

/// Mean and variance coefficients of the posterior:
/// `μ_q = coef_xt·x_t + coef_x0·x_0`, `σ_q² = variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorParams {
    pub coef_xt: f64,
    pub coef_x0: f64,
    pub variance: f64,
}

/// `x_t = k_t a_t x_{t-1} + k_t b_t ε_t`, for `1 ≤ t ≤ T`.
pub fn forward_step(
    x_prev: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    eps: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.check_timestep(t, 1)?;
    let k = schedule.k(t);
    x_prev.lin_comb(k * schedule.a(t), eps, k * sqrt(schedule.b_sq(t)))
}

/// `x_t = k̄_t ā_t x_0 + sqrt(k_t^4 − k̄_t² ā_t²) ε̃`, for `0 ≤ t ≤ T`.
/// At `t = 0` this is the identity.
pub fn forward_marginal(
    x0: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    eps: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.check_timestep(t, 0)?;
    eps.ensure_shape(x0.shape())?;
    if t == 0 {
        return Ok(x0.clone());
    }
    x0.lin_comb(schedule.signal_coef(t), eps, schedule.noise_std(t))
}

/// Inverts the marginal given a noise estimate:
/// `x̂_0 = (x_t − sqrt(k_t^4 − k̄_t² ā_t²)·ε̂) / (k̄_t ā_t)`.
///
/// The division uses the log-domain signal coefficient.
pub fn recover_x0(
    x_t: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    noise_hat: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.check_timestep(t, 1)?;
    let inv = schedule.inv_signal_coef(t);
    x_t.lin_comb(inv, noise_hat, -schedule.noise_std(t) * inv)
}

/// `D_t = k_t² − k̄_{t-1}² ā_t²`, evaluated as `b_t² + a_t² v_{t-1}` (equal by
/// the recurrence) to avoid cancellation at small `t`.
fn posterior_denominator(t: usize, schedule: &NoiseSchedule) -> f64 {
    let a = schedule.a(t);
    schedule.b_sq(t) + a * a * schedule.noise_var(t - 1)
}

/// Posterior coefficients for `1 ≤ t ≤ T`:
///
/// ```text
/// coef_xt  = a_t (k_{t-1}^4 − k̄_{t-1}² ā_{t-1}²) / (k_t D_t)
/// coef_x0  = b_t² k̄_{t-1} ā_{t-1} / D_t
/// variance = b_t² (k_{t-1}^4 − k̄_{t-1}² ā_{t-1}²) / D_t
/// ```
///
/// At `t = 1` the empty products give `variance = 0` and `μ_q = x_0`.
pub fn posterior_params(t: usize, schedule: &NoiseSchedule) -> Result<PosteriorParams> {
    schedule.check_timestep(t, 1)?;
    let d = posterior_denominator(t, schedule);
    let v_prev = schedule.noise_var(t - 1);
    let b_sq = schedule.b_sq(t);
    Ok(PosteriorParams {
        coef_xt: schedule.a(t) * v_prev / (schedule.k(t) * d),
        coef_x0: b_sq * schedule.signal_coef(t - 1) / d,
        variance: b_sq * v_prev / d,
    })
}

/// `μ_q` from `x_t` and `x_0` directly.
pub fn posterior_mean(x_t: &ImageTensor, x0: &ImageTensor, t: usize, schedule: &NoiseSchedule) -> Result<ImageTensor> {
    let p = posterior_params(t, schedule)?;
    x_t.lin_comb(p.coef_xt, x0, p.coef_x0)
}

/// `μ_θ = x_t / (k_t a_t) − b_t² / (a_t sqrt(D_t)) · ε̂`, the posterior mean with
/// `x_0` replaced by its noise-parameterized estimate.
pub fn posterior_mean_from_noise(
    x_t: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    noise_hat: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.check_timestep(t, 1)?;
    let a = schedule.a(t);
    let d = posterior_denominator(t, schedule);
    x_t.lin_comb(1.0 / (schedule.k(t) * a), noise_hat, -schedule.b_sq(t) / (a * sqrt(d)))
}

/// One ancestral reverse step `μ_θ + σ_q z`. `z` is ignored at `t = 1`, where
/// `σ_q = 0`.
pub fn posterior_step(
    x_t: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    noise_hat: &ImageTensor,
    z: &ImageTensor,
) -> Result<ImageTensor> {
    let mean = posterior_mean_from_noise(x_t, t, schedule, noise_hat)?;
    if t == 1 {
        return Ok(mean);
    }
    let sigma = sqrt(posterior_params(t, schedule)?.variance);
    mean.lin_comb(1.0, z, sigma)
}

/// Weight multiplying `‖f_θ − ε̃‖²` in the per-step KL term,
/// `b_t^4 / (2 σ_q² a_t² D_t)`, for `2 ≤ t ≤ T`.
///
/// Diagnostic only: the training objective uses an unweighted L1 on the noise.
pub fn kl_weight(t: usize, schedule: &NoiseSchedule) -> Result<f64> {
    schedule.check_timestep(t, 2)?;
    let p = posterior_params(t, schedule)?;
    let a = schedule.a(t);
    let b_sq = schedule.b_sq(t);
    Ok(b_sq * b_sq / (2.0 * p.variance * a * a * posterior_denominator(t, schedule)))
}
