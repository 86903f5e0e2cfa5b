//! Generalized DDIM sampling under the attenuated schedule, and the
//! multi-scale pyramid sampler built on it.
//!
//! A DDIM jump from `t` to any earlier `p` is
//!
//! ```text
//! x_p = (k̄_p ā_p / k̄_t ā_t)·(x_t − sqrt(v_t)·ε̂) + sqrt(v_p − σ²)·ε̂ + σ z
//! ```
//!
//! with `v_t = k_t^4 − k̄_t² ā_t²`. With `σ = 0` and the exact marginal noise
//! the jump lands exactly on the forward marginal at `p`, which is what the
//! [`OracleDenoiser`] makes checkable.
//!
//! Pyramid sampling runs the same jumps on progressively finer grids. At a
//! scale change the clean estimate `x̂_0` is upsampled and re-noised to the
//! next timestep with the forward marginal instead of interpolating `x_t`.

use alloc::vec::Vec;

use libm::sqrt;

use crate::diffusion::{forward_marginal, recover_x0};
use crate::error::{Error, Result};
use crate::image::{box_downscale, resize, ImageTensor, ResizeMode, Shape};
use crate::noise::{NoiseDraw, NoisePurpose};
use crate::schedule::NoiseSchedule;

/// Noise-prediction model: maps `(x_t, t, condition)` to `ε̂` with the shape
/// of `x_t`.
///
/// `x_t` arrives at the current pyramid scale and `condition` has been
/// downscaled to the same grid. Flattened, the condition channels are ordered
/// `low[3], pos[n], dehaze[3]` (see [`ConditionStack::to_tensor`]); `t` lies
/// in `1..=T`. Implementations must be deterministic and usable from several
/// threads at once.
pub trait Denoiser {
    fn predict(&self, x_t: &ImageTensor, t: usize, condition: &ConditionStack) -> Result<ImageTensor>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, x_t: &ImageTensor, t: usize, condition: &ConditionStack) -> Result<ImageTensor> {
        (**self).predict(x_t, t, condition)
    }
}

/// Conditioning images shared by every sampling step. All members have the
/// same height and width.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionStack {
    pub low: ImageTensor,
    pub pos: ImageTensor,
    /// Absent when the prior condition is disabled.
    pub dehaze: Option<ImageTensor>,
    pub extras: Vec<ImageTensor>,
}

impl ConditionStack {
    pub fn new(low: ImageTensor, pos: ImageTensor, dehaze: Option<ImageTensor>) -> Result<Self> {
        let stack = Self {
            low,
            pos,
            dehaze,
            extras: Vec::new(),
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn with_extra(mut self, extra: ImageTensor) -> Result<Self> {
        self.extras.push(extra);
        self.validate()?;
        Ok(self)
    }

    fn members(&self) -> impl Iterator<Item = &ImageTensor> {
        core::iter::once(&self.low)
            .chain(core::iter::once(&self.pos))
            .chain(self.dehaze.iter())
            .chain(self.extras.iter())
    }

    fn validate(&self) -> Result<()> {
        let (h, w) = (self.low.height(), self.low.width());
        for m in self.members() {
            if m.height() != h || m.width() != w {
                return Err(Error::ShapeMismatch {
                    expected: Shape::new(h, w, m.channels()),
                    found: m.shape(),
                });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.low.height()
    }

    pub fn width(&self) -> usize {
        self.low.width()
    }

    /// Total number of condition channels.
    pub fn channels(&self) -> usize {
        self.members().map(ImageTensor::channels).sum()
    }

    /// Concatenation in the documented order: low, pos, dehaze, extras.
    pub fn to_tensor(&self) -> Result<ImageTensor> {
        let parts: Vec<&ImageTensor> = self.members().collect();
        ImageTensor::stack_channels(&parts)
    }

    /// Box-downscales every member by `factor`.
    pub fn downscale(&self, factor: usize) -> Result<Self> {
        if factor == 1 {
            return Ok(self.clone());
        }
        Ok(Self {
            low: box_downscale(&self.low, factor)?,
            pos: box_downscale(&self.pos, factor)?,
            dehaze: self.dehaze.as_ref().map(|d| box_downscale(d, factor)).transpose()?,
            extras: self
                .extras
                .iter()
                .map(|e| box_downscale(e, factor))
                .collect::<Result<_>>()?,
        })
    }
}

/// Returns the exact marginal noise `ε̃ = (x_t − k̄_t ā_t x_0) / sqrt(v_t)`
/// implied by a known clean image. When `x_t` is on a coarser grid, `x_0` is
/// box-downscaled to match.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    x0: ImageTensor,
    schedule: NoiseSchedule,
}

impl OracleDenoiser {
    pub fn new(x0: ImageTensor, schedule: NoiseSchedule) -> Self {
        Self { x0, schedule }
    }

    pub fn x0(&self) -> &ImageTensor {
        &self.x0
    }

    fn x0_at(&self, shape: Shape) -> Result<ImageTensor> {
        let mismatch = || Error::ShapeMismatch {
            expected: self.x0.shape(),
            found: shape,
        };
        if shape.channels != self.x0.channels() || shape.height == 0 || !self.x0.height().is_multiple_of(shape.height) {
            return Err(mismatch());
        }
        let factor = self.x0.height() / shape.height;
        if shape.width * factor != self.x0.width() {
            return Err(mismatch());
        }
        box_downscale(&self.x0, factor)
    }
}

impl Denoiser for OracleDenoiser {
    fn predict(&self, x_t: &ImageTensor, t: usize, _condition: &ConditionStack) -> Result<ImageTensor> {
        self.schedule.check_timestep(t, 1)?;
        let x0 = self.x0_at(x_t.shape())?;
        let inv_std = 1.0 / self.schedule.noise_std(t);
        x_t.lin_comb(inv_std, &x0, -self.schedule.signal_coef(t) * inv_std)
    }
}

/// The `(m, n)` of `x_p = m·x_0 + n·x_t + σ z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdimCoefficients {
    pub m: f64,
    pub n: f64,
    pub sigma: f64,
}

fn check_jump(t: usize, p: usize, schedule: &NoiseSchedule, sigma: f64) -> Result<()> {
    schedule.check_timestep(t, 1)?;
    if p >= t {
        return Err(Error::InvalidStepOrder { t, p });
    }
    let limit = schedule.noise_var(p);
    let sigma_sq = sigma * sigma;
    if !(sigma >= 0.0) || sigma_sq > limit {
        return Err(Error::SigmaTooLarge { sigma_sq, limit });
    }
    Ok(())
}

/// Closed-form solution of the coefficient-matching system
/// `m + n·k̄_t ā_t = k̄_p ā_p`, `n²·v_t + σ² = v_p`.
pub fn ddim_coefficients(t: usize, p: usize, schedule: &NoiseSchedule, sigma: f64) -> Result<DdimCoefficients> {
    check_jump(t, p, schedule, sigma)?;
    let n = sqrt(schedule.noise_var(p) - sigma * sigma) / schedule.noise_std(t);
    let m = schedule.signal_coef(p) - schedule.signal_coef(t) * n;
    Ok(DdimCoefficients { m, n, sigma })
}

/// One generalized DDIM jump `t → p` (`0 ≤ p < t ≤ T`).
///
/// `z` is required when `sigma > 0` and ignored otherwise. With `p = 0` the
/// result is exactly [`recover_x0`].
pub fn ddim_step(
    x_t: &ImageTensor,
    t: usize,
    p: usize,
    schedule: &NoiseSchedule,
    noise_hat: &ImageTensor,
    sigma: f64,
    z: Option<&ImageTensor>,
) -> Result<ImageTensor> {
    check_jump(t, p, schedule, sigma)?;
    let ratio = schedule.signal_ratio(p, t);
    let keep = sqrt(schedule.noise_var(p) - sigma * sigma);
    let x = x_t.lin_comb(ratio, noise_hat, keep - ratio * schedule.noise_std(t))?;
    if sigma == 0.0 {
        return Ok(x);
    }
    let z = z.ok_or(Error::InvalidDimension("sigma > 0 requires a noise field"))?;
    x.lin_comb(1.0, z, sigma)
}

/// Which end of the factor list is executed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PyramidOrientation {
    /// The list is indexed by output time, so reverse-time execution consumes
    /// it back to front: `[1,1,1,2,2,2,4,4,4,4]` runs as `4,4,4,4,2,2,2,1,1,1`.
    #[default]
    CoarseToFine,
    /// Execute the list front to back.
    AsListed,
}

/// Step allocation `[1, 1, 1, 2, 2, 2, 4, 4, 4, 4]`.
pub const DEFAULT_FACTORS: [usize; 10] = [1, 1, 1, 2, 2, 2, 4, 4, 4, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanStep {
    pub t: usize,
    pub factor: usize,
}

/// Execution-ordered `(timestep, downscale factor)` pairs. The final jump of
/// the last step always goes to `t = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidPlan {
    pub steps: Vec<PlanStep>,
    pub base_shape: (usize, usize),
}

impl PyramidPlan {
    /// Uniform stride over `(0, T]`: `t_i = T·i / n` for `i = n..1`, each
    /// paired with a factor according to `orientation`.
    pub fn new(
        schedule: &NoiseSchedule,
        total_steps_out: usize,
        factors: &[usize],
        orientation: PyramidOrientation,
        base_shape: (usize, usize),
    ) -> Result<Self> {
        let total = schedule.total_steps();
        if total_steps_out == 0 || total_steps_out > total {
            return Err(Error::InvalidPlan("step count must lie in 1..=T"));
        }
        if factors.len() != total_steps_out {
            return Err(Error::InvalidPlan("factor list length must equal the step count"));
        }
        if let Some(&bad) = factors.iter().find(|f| !matches!(f, 1 | 2 | 4)) {
            return Err(Error::InvalidFactor(bad));
        }
        let exec: Vec<usize> = match orientation {
            PyramidOrientation::CoarseToFine => factors.iter().rev().copied().collect(),
            PyramidOrientation::AsListed => factors.to_vec(),
        };
        if orientation == PyramidOrientation::CoarseToFine && exec.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidPlan(
                "coarse-to-fine execution needs non-increasing factors",
            ));
        }
        let (h, w) = base_shape;
        for &f in &exec {
            if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
                return Err(Error::NotDivisible {
                    height: h,
                    width: w,
                    factor: f,
                });
            }
        }
        let steps = (1..=total_steps_out)
            .rev()
            .zip(exec)
            .map(|(i, factor)| PlanStep {
                t: total * i / total_steps_out,
                factor,
            })
            .collect();
        Ok(Self { steps, base_shape })
    }

    /// Ten steps with [`DEFAULT_FACTORS`], coarse to fine.
    pub fn standard(schedule: &NoiseSchedule, base_shape: (usize, usize)) -> Result<Self> {
        Self::new(
            schedule,
            DEFAULT_FACTORS.len(),
            &DEFAULT_FACTORS,
            PyramidOrientation::CoarseToFine,
            base_shape,
        )
    }

    /// Single-scale plan with `steps` uniformly strided jumps.
    pub fn flat(schedule: &NoiseSchedule, steps: usize, base_shape: (usize, usize)) -> Result<Self> {
        Self::new(
            schedule,
            steps,
            &alloc::vec![1; steps],
            PyramidOrientation::CoarseToFine,
            base_shape,
        )
    }

    pub fn max_factor(&self) -> usize {
        self.steps.iter().map(|s| s.factor).max().unwrap_or(1)
    }
}

/// Upsamples (or downsamples) a clean estimate from one pyramid grid to
/// another and re-noises it to `target_t` with the forward marginal.
pub fn cross_scale_lift(
    x0_hat: &ImageTensor,
    from_factor: usize,
    to_factor: usize,
    target_t: usize,
    schedule: &NoiseSchedule,
    noise: &ImageTensor,
) -> Result<ImageTensor> {
    if from_factor == 0 || to_factor == 0 {
        return Err(Error::InvalidFactor(0));
    }
    let (h, w) = (x0_hat.height() * from_factor, x0_hat.width() * from_factor);
    if h % to_factor != 0 || w % to_factor != 0 {
        return Err(Error::NotDivisible {
            height: h,
            width: w,
            factor: to_factor,
        });
    }
    let resampled = resize(x0_hat, h / to_factor, w / to_factor, ResizeMode::Bilinear)?;
    forward_marginal(&resampled, target_t, schedule, noise)
}

/// Distribution of the sampler's starting state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitNoise {
    /// Standard deviation `sqrt(v_T)`, matching the forward endpoint.
    #[default]
    MarginalStd,
    /// Unit standard deviation.
    UnitStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleOptions {
    pub seed: u64,
    pub init: InitNoise,
}

/// Runs `plan` with `denoiser`, deterministic (`σ = 0`) apart from the seeded
/// initial draw and the seeded re-noising at scale changes. The output is
/// clamped to `[0, 1]`.
pub fn pyramid_sample<D: Denoiser + ?Sized>(
    plan: &PyramidPlan,
    denoiser: &D,
    condition: &ConditionStack,
    schedule: &NoiseSchedule,
    options: SampleOptions,
) -> Result<ImageTensor> {
    let (h, w) = plan.base_shape;
    if condition.height() != h || condition.width() != w {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(h, w, condition.low.channels()),
            found: condition.low.shape(),
        });
    }
    let first = *plan.steps.first().ok_or(Error::InvalidPlan("empty plan"))?;
    schedule.check_timestep(first.t, 1)?;
    let channels = condition.low.channels();
    let grid = |factor: usize| Shape::new(h / factor, w / factor, channels);

    let init_std = match options.init {
        InitNoise::MarginalStd => schedule.noise_std(first.t),
        InitNoise::UnitStd => 1.0,
    };
    let mut x = NoiseDraw::for_purpose(options.seed, NoisePurpose::SamplerInit, first.t, 0, grid(first.factor))
        .sample()
        .scale(init_std);

    let mut scaled: Vec<(usize, ConditionStack)> = Vec::new();
    for (i, step) in plan.steps.iter().enumerate() {
        let (target_t, next_factor) = plan.steps.get(i + 1).map_or((0, step.factor), |n| (n.t, n.factor));

        let cond_idx = match scaled.iter().position(|(f, _)| *f == step.factor) {
            Some(idx) => idx,
            None => {
                scaled.push((step.factor, condition.downscale(step.factor)?));
                scaled.len() - 1
            }
        };
        let eps_hat = denoiser.predict(&x, step.t, &scaled[cond_idx].1)?;
        eps_hat.ensure_shape(x.shape())?;

        x = if next_factor == step.factor {
            ddim_step(&x, step.t, target_t, schedule, &eps_hat, 0.0, None)?
        } else {
            let x0_hat = recover_x0(&x, step.t, schedule, &eps_hat)?;
            let noise = NoiseDraw::for_purpose(
                options.seed,
                NoisePurpose::ScaleLift,
                target_t,
                i as u64,
                grid(next_factor),
            )
            .sample();
            cross_scale_lift(&x0_hat, step.factor, next_factor, target_t, schedule, &noise)?
        };
    }
    Ok(x.clamp01())
}

/// Training-time scale for timestep `t`: factor 4 for `t > 0.6·T`, 2 for
/// `t > 0.3·T`, 1 otherwise (bands match the 4/3/3 step allocation).
pub fn training_scale(t: usize, total_steps: usize) -> usize {
    if 10 * t > 6 * total_steps {
        4
    } else if 10 * t > 3 * total_steps {
        2
    } else {
        1
    }
}

/// A noised training input at the scale chosen for its timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub t: usize,
    pub factor: usize,
    pub x0: ImageTensor,
    pub eps: ImageTensor,
    pub x_t: ImageTensor,
}

/// Downscales `x0` to the scale for `t` and noises it with a seeded marginal draw.
pub fn training_sample(
    x0: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
    index: u64,
) -> Result<TrainingSample> {
    schedule.check_timestep(t, 1)?;
    let factor = training_scale(t, schedule.total_steps());
    let x0 = box_downscale(x0, factor)?;
    let eps = NoiseDraw::for_purpose(seed, NoisePurpose::Marginal, t, index, x0.shape()).sample();
    let x_t = forward_marginal(&x0, t, schedule, &eps)?;
    Ok(TrainingSample {
        t,
        factor,
        x0,
        eps,
        x_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleConfig;
    use alloc::vec;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::build(ScheduleConfig::default()).unwrap()
    }

    fn pairs(plan: &PyramidPlan) -> Vec<(usize, usize)> {
        plan.steps.iter().map(|s| (s.t, s.factor)).collect()
    }

    #[test]
    fn default_plan_runs_coarse_to_fine() {
        let plan = PyramidPlan::standard(&sched(), (64, 64)).unwrap();
        assert_eq!(
            pairs(&plan),
            vec![
                (1000, 4),
                (900, 4),
                (800, 4),
                (700, 4),
                (600, 2),
                (500, 2),
                (400, 2),
                (300, 1),
                (200, 1),
                (100, 1)
            ]
        );
        assert_eq!(plan.max_factor(), 4);
    }

    #[test]
    fn flat_and_full_plans() {
        let s = sched();
        let flat = PyramidPlan::flat(&s, 10, (8, 8)).unwrap();
        assert!(flat.steps.iter().all(|p| p.factor == 1));
        assert_eq!(flat.steps[0].t, 1000);
        assert_eq!(flat.steps[9].t, 100);
        let full = PyramidPlan::flat(&s, 1000, (8, 8)).unwrap();
        assert_eq!(full.steps.len(), 1000);
        assert!(full.steps.iter().zip(1..=1000).all(|(p, i)| p.t == 1001 - i));
    }

    #[test]
    fn as_listed_orientation() {
        let plan = PyramidPlan::new(&sched(), 10, &DEFAULT_FACTORS, PyramidOrientation::AsListed, (8, 8)).unwrap();
        assert_eq!(plan.steps[0], PlanStep { t: 1000, factor: 1 });
        assert_eq!(plan.steps[9], PlanStep { t: 100, factor: 4 });
    }

    #[test]
    fn plan_validation() {
        let s = sched();
        assert!(matches!(
            PyramidPlan::new(&s, 3, &[1, 3, 1], PyramidOrientation::CoarseToFine, (8, 8)),
            Err(Error::InvalidFactor(3))
        ));
        assert!(PyramidPlan::new(&s, 3, &[1, 1], PyramidOrientation::CoarseToFine, (8, 8)).is_err());
        // reversed → 1,4: grows coarser mid-run
        assert!(PyramidPlan::new(&s, 2, &[4, 1], PyramidOrientation::CoarseToFine, (8, 8)).is_err());
        assert!(matches!(
            PyramidPlan::standard(&s, (30, 30)),
            Err(Error::NotDivisible { .. })
        ));
        assert!(PyramidPlan::flat(&s, 0, (8, 8)).is_err());
        assert!(PyramidPlan::flat(&s, 1001, (8, 8)).is_err());
    }

    #[test]
    fn sigma_and_order_checks() {
        let s = sched();
        let x = ImageTensor::zeros(Shape::new(2, 2, 1));
        assert!(matches!(
            ddim_step(&x, 100, 100, &s, &x, 0.0, None),
            Err(Error::InvalidStepOrder { .. })
        ));
        assert!(ddim_step(&x, 100, 200, &s, &x, 0.0, None).is_err());
        let too_big = s.noise_std(50) * 1.01;
        assert!(matches!(
            ddim_step(&x, 100, 50, &s, &x, too_big, Some(&x)),
            Err(Error::SigmaTooLarge { .. })
        ));
        assert!(ddim_step(&x, 100, 50, &s, &x, 0.01, None).is_err());
        assert!(ddim_step(&x, 100, 50, &s, &x, 0.01, Some(&x)).is_ok());
        // p = 0 leaves no room for σ
        assert!(ddim_step(&x, 100, 0, &s, &x, 1e-3, Some(&x)).is_err());
    }

    #[test]
    fn ddim_to_zero_equals_recover() {
        let s = sched();
        let shape = Shape::new(3, 3, 3);
        let x = NoiseDraw::new(1, 1, shape).sample();
        let e = NoiseDraw::new(1, 2, shape).sample();
        for t in [1, 37, 1000] {
            assert_eq!(
                ddim_step(&x, t, 0, &s, &e, 0.0, None).unwrap(),
                recover_x0(&x, t, &s, &e).unwrap()
            );
        }
    }

    #[test]
    fn coefficient_identities_hold_for_adjacent_steps() {
        let s = sched();
        for t in 1..=s.total_steps() {
            for sigma_frac in [0.0, 0.5] {
                let sigma = sigma_frac * s.noise_std(t - 1);
                let c = ddim_coefficients(t, t - 1, &s, sigma).unwrap();
                let lhs1 = c.m + c.n * s.signal_coef(t);
                assert!((lhs1 - s.signal_coef(t - 1)).abs() <= 1e-12, "t={t}");
                let lhs2 = c.n * c.n * s.noise_var(t) + sigma * sigma;
                assert!((lhs2 - s.noise_var(t - 1)).abs() <= 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn lift_without_scale_change_is_marginal() {
        let s = sched();
        let shape = Shape::new(4, 4, 3);
        let x0 = ImageTensor::filled(shape, 0.4);
        let e = NoiseDraw::new(3, 3, shape).sample();
        assert_eq!(
            cross_scale_lift(&x0, 2, 2, 300, &s, &e).unwrap(),
            forward_marginal(&x0, 300, &s, &e).unwrap()
        );
        let big = NoiseDraw::new(3, 3, Shape::new(8, 8, 3)).sample();
        let lifted = cross_scale_lift(&x0, 2, 1, 300, &s, &big).unwrap();
        assert_eq!(lifted.shape(), Shape::new(8, 8, 3));
        assert!(cross_scale_lift(&x0, 2, 1, 300, &s, &e).is_err());
    }

    #[test]
    fn condition_stack_layout() {
        let low = ImageTensor::filled(Shape::new(4, 4, 3), 0.1);
        let pos = ImageTensor::filled(Shape::new(4, 4, 4), 0.2);
        let dehaze = ImageTensor::filled(Shape::new(4, 4, 3), 0.3);
        let stack = ConditionStack::new(low, pos, Some(dehaze)).unwrap();
        assert_eq!(stack.channels(), 10);
        let t = stack.to_tensor().unwrap();
        let px: Vec<f64> = (0..10).map(|c| t.get(1, 2, c)).collect();
        assert_eq!(px, [0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.3, 0.3, 0.3]);
        let half = stack.downscale(2).unwrap();
        assert_eq!(half.height(), 2);
        assert_eq!(half.channels(), 10);
        let bad = ConditionStack::new(
            ImageTensor::zeros(Shape::new(4, 4, 3)),
            ImageTensor::zeros(Shape::new(4, 5, 4)),
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn training_scale_bands() {
        assert_eq!(training_scale(1000, 1000), 4);
        assert_eq!(training_scale(601, 1000), 4);
        assert_eq!(training_scale(600, 1000), 2);
        assert_eq!(training_scale(301, 1000), 2);
        assert_eq!(training_scale(300, 1000), 1);
        assert_eq!(training_scale(1, 1000), 1);
    }

    #[test]
    fn training_sample_uses_band_scale() {
        let s = sched();
        let x0 = ImageTensor::filled(Shape::new(16, 16, 3), 0.5);
        let ts = training_sample(&x0, 800, &s, 1, 0).unwrap();
        assert_eq!(ts.factor, 4);
        assert_eq!(ts.x_t.shape(), Shape::new(4, 4, 3));
        let back = recover_x0(&ts.x_t, 800, &s, &ts.eps).unwrap();
        assert!(back.max_abs_diff(&ts.x0).unwrap() < 1e-9);
    }
}
