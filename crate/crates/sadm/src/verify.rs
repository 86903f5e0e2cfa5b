//! Verification harness.
//!
//! Each suite re-derives the library's identities from reference computations
//! written here (brute-force sums, textbook DDPM/DDIM formulas, the explicit
//! dehaze pipeline, per-window SSIM) and runs the Monte-Carlo checks at a
//! configurable sample count. Monte-Carlo samples use per-sample noise
//! streams and are reduced in sample order, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;

use sadm_core::diffusion::{
    forward_marginal, forward_step, kl_weight, posterior_mean, posterior_mean_from_noise, posterior_params,
    posterior_step, recover_x0,
};
use sadm_core::image::{luminance, rgb_to_ycbcr};
use sadm_core::prior::{
    assemble_condition, dehaze_prior, dehaze_raw, hist_equalize, position_channels, ConditionConfig, DEFAULT_GAMMA,
};
use sadm_core::quality::{
    bhattacharyya_coefficient, brightness_weight, gtmean_loss, l1, perception_loss, psnr, ssim, total_loss,
    AvgPoolExtractor, LossConfig, SsimParams,
};
use sadm_core::sampler::{
    cross_scale_lift, ddim_coefficients, ddim_step, pyramid_sample, OracleDenoiser, PyramidPlan, SampleOptions,
};
use sadm_core::schedule::sweep;
use sadm_core::{ImageTensor, NoiseDraw, NoisePurpose, NoiseSchedule, ScheduleConfig, Shape};
use serde::{Deserialize, Serialize};

use crate::config::ScheduleSettings;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Schedule,
    Diffusion,
    Ddim,
    Prior,
    Losses,
    All,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Schedule,
        Suite::Diffusion,
        Suite::Ddim,
        Suite::Prior,
        Suite::Losses,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Schedule => "schedule",
            Self::Diffusion => "diffusion",
            Self::Ddim => "ddim",
            Self::Prior => "prior",
            Self::Losses => "losses",
            Self::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .chain([Self::All])
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `measured ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }

    /// Passes when `measured ≥ tolerance` (the tolerance is a floor).
    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            pass: measured >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seed: u64,
    pub schedule_config: ScheduleSettings,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Shift applied to one `a_t` to check that the harness catches it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tamper {
    pub t: usize,
    pub delta: f64,
}

impl FromStr for Tamper {
    type Err = Error;

    /// Parses `T:DELTA`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("expected T:DELTA, got {s:?}"));
        let (t, delta) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self {
            t: t.trim().parse().map_err(|_| bad())?,
            delta: delta.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub samples: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub tamper: Option<Tamper>,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            samples: 10_000,
            seed: 0,
            schedule: ScheduleConfig::default(),
            tamper: None,
            workers: 1,
        }
    }
}

pub fn run(opts: &VerifyOptions) -> Result<Report> {
    if opts.samples < 2 {
        return Err(Error::Usage("--samples must be at least 2".into()));
    }
    let mut schedule = NoiseSchedule::build(opts.schedule)?;
    if let Some(Tamper { t, delta }) = opts.tamper {
        schedule.check_timestep(t, 1)?;
        schedule = schedule.with_perturbed_a(t, delta);
    }
    let ctx = Ctx { opts, s: &schedule };
    let suites: Vec<Suite> = match opts.suite {
        Suite::All => Suite::ALL.to_vec(),
        one => vec![one],
    };
    let mut checks = Vec::new();
    for suite in suites {
        match suite {
            Suite::Schedule => ctx.schedule_suite(&mut checks)?,
            Suite::Diffusion => ctx.diffusion_suite(&mut checks)?,
            Suite::Ddim => ctx.ddim_suite(&mut checks)?,
            Suite::Prior => ctx.prior_suite(&mut checks)?,
            Suite::Losses => ctx.losses_suite(&mut checks)?,
            Suite::All => unreachable!(),
        }
    }
    Ok(Report {
        suite: opts.suite,
        checks,
        seed: opts.seed,
        schedule_config: opts.schedule.into(),
    })
}

/// Maps `f` over `0..n`, sharding across `workers` threads; output is in index order.
fn par_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || (w * chunk..((w + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn max_diff(a: &ImageTensor, b: &ImageTensor) -> f64 {
    a.max_abs_diff(b).unwrap_or(f64::INFINITY)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Deterministic `[0, 1]` test image: a clipped Gaussian field around 0.5.
fn test_image(seed: u64, index: u64, shape: Shape) -> ImageTensor {
    NoiseDraw::for_purpose(seed, NoisePurpose::Auxiliary, 0, index, shape)
        .sample()
        .map(|z| (0.5 + 0.2 * z).clamp(0.0, 1.0))
}

fn gaussian(seed: u64, index: u64, shape: Shape) -> ImageTensor {
    NoiseDraw::for_purpose(seed, NoisePurpose::Auxiliary, 1, index, shape).sample()
}

/// Timesteps in `wanted` that exist in a `T`-step schedule.
fn within(wanted: &[usize], total: usize) -> Vec<usize> {
    wanted.iter().copied().filter(|&t| t >= 1 && t <= total).collect()
}

struct Ctx<'a> {
    opts: &'a VerifyOptions,
    s: &'a NoiseSchedule,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.opts.seed
    }

    fn total(&self) -> usize {
        self.s.total_steps()
    }

    fn schedule_suite(&self, out: &mut Vec<Check>) -> Result<()> {
        let s = self.s;
        let total = self.total();
        let mut recurrence: f64 = 0.0;
        let mut signal: f64 = 0.0;
        let mut variance: f64 = 0.0;
        let mut split: f64 = 0.0;
        let mut negative: f64 = 0.0;
        let mut monotone = 0usize;
        for t in 1..=total {
            let (k, kp, a, b_sq) = (s.k(t), s.k(t - 1), s.a(t), s.b_sq(t));
            recurrence = recurrence.max((kp.powi(4) * a * a + b_sq - k * k).abs() / (k * k));
            let sc = k * a * s.signal_coef(t - 1);
            signal = signal.max((s.signal_coef(t) - sc).abs() / sc);
            let v = k * k * (a * a * s.noise_var(t - 1) + b_sq);
            variance = variance.max((s.noise_var(t) - v).abs() / v);
            split = split.max((s.signal_coef(t).powi(2) + s.noise_var(t) - k.powi(4)).abs());
            negative = negative.max(-s.noise_var(t));
            monotone += usize::from(s.signal_coef(t) >= s.signal_coef(t - 1));
        }
        out.push(Check::at_most(
            "schedule.recurrence_max_rel_residual",
            recurrence,
            1e-12,
        ));
        out.push(Check::at_most("schedule.signal_propagation_max_rel_err", signal, 1e-12));
        out.push(Check::at_most(
            "schedule.noise_var_propagation_max_rel_err",
            variance,
            1e-12,
        ));
        out.push(Check::at_most("schedule.energy_split_max_abs_err", split, 1e-12));
        out.push(Check::at_most(
            "schedule.noise_var_negative_part",
            negative.max(0.0),
            0.0,
        ));
        out.push(Check::at_most(
            "schedule.signal_monotone_violations",
            monotone as f64,
            0.0,
        ));

        // Every term of the unrolled chain, summed explicitly.
        let mut telescoping: f64 = 0.0;
        for t in 1..=total.min(64) {
            let gain = |from: usize| -> f64 { (from..=t).map(|j| (s.k(j) * s.a(j)).powi(2)).product() };
            let mut sum = gain(1);
            for j in 1..=t {
                sum += gain(j + 1) * s.k(j) * s.k(j) * s.b_sq(j);
            }
            telescoping = telescoping.max((sum - s.k(t).powi(4)).abs());
        }
        out.push(Check::at_most("schedule.telescoping_max_abs_err", telescoping, 1e-10));

        let ddpm = NoiseSchedule::build(self.opts.schedule.ddpm())?;
        let mut alpha_bar = 1.0;
        let mut ddpm_err: f64 = 0.0;
        for t in 1..=ddpm.total_steps() {
            alpha_bar *= 1.0 - ddpm.b_sq(t);
            ddpm_err = ddpm_err
                .max((ddpm.signal_coef(t) - alpha_bar.sqrt()).abs())
                .max((ddpm.noise_var(t) - (1.0 - alpha_bar)).abs())
                .max((ddpm.a(t).powi(2) + ddpm.b_sq(t) - 1.0).abs());
        }
        out.push(Check::at_most(
            "schedule.ddpm_degeneration_max_abs_err",
            ddpm_err,
            1e-10,
        ));

        let tables = sweep(&self.opts.schedule, &[0.99, 0.999, 0.9999])?;
        let mut order = 0usize;
        for pair in tables.windows(2) {
            let common = pair[0].schedule.total_steps().min(pair[1].schedule.total_steps());
            order += (1..=common)
                .filter(|&t| pair[0].schedule.signal_coef(t) >= pair[1].schedule.signal_coef(t))
                .count();
        }
        out.push(Check::at_most("schedule.sweep_order_violations", order as f64, 0.0));
        Ok(())
    }

    fn diffusion_suite(&self, out: &mut Vec<Check>) -> Result<()> {
        let s = self.s;
        let total = self.total();
        let n = self.opts.samples;
        let workers = self.opts.workers;
        let seed = self.seed();

        let shape = Shape::new(8, 8, 1);
        let ones = ImageTensor::filled(shape, 1.0);
        for t in within(&[10, 100, 500, 1000], total) {
            let energies = par_map(n, workers, |i| {
                let eps = NoiseDraw::for_purpose(seed, NoisePurpose::Marginal, t, i as u64, shape).sample();
                forward_marginal(&ones, t, s, &eps).map(|x| x.mean_square())
            })
            .into_iter()
            .collect::<sadm_core::Result<Vec<_>>>()?;
            let (mean, se) = mean_and_se(&energies);
            out.push(Check::at_most(
                format!("diffusion.energy_law_t{t}_z"),
                (mean - s.energy(t)).abs() / se,
                4.0,
            ));
        }

        let x0 = test_image(seed, 0, Shape::new(4, 4, 1));
        for t in within(&[1, 5, 50], total) {
            let (mean_z, var_z) = self.stepwise_vs_marginal(&x0, t)?;
            out.push(Check::at_most(
                format!("diffusion.stepwise_marginal_t{t}_mean_z"),
                mean_z,
                4.0,
            ));
            out.push(Check::at_most(
                format!("diffusion.stepwise_marginal_t{t}_var_z"),
                var_z,
                4.0,
            ));
        }
        let (mean_z, var_z) = self.stepwise_vs_marginal(&ImageTensor::filled(Shape::new(2, 2, 1), 0.5), total)?;
        out.push(Check::at_most("diffusion.forward_chain_endpoint_mean_z", mean_z, 4.0));
        out.push(Check::at_most("diffusion.forward_chain_endpoint_var_z", var_z, 4.0));

        let coarse = ImageTensor::filled(Shape::new(4, 4, 1), 0.3);
        let target = (total * 3 / 5).max(1);
        let lifted = par_map(n, workers, |i| {
            let noise =
                NoiseDraw::for_purpose(seed, NoisePurpose::ScaleLift, target, i as u64, Shape::new(8, 8, 1)).sample();
            cross_scale_lift(&coarse, 2, 1, target, s, &noise).map(|x| x.mean())
        })
        .into_iter()
        .collect::<sadm_core::Result<Vec<_>>>()?;
        let (mean, se) = mean_and_se(&lifted);
        out.push(Check::at_most(
            "diffusion.scale_lift_mean_z",
            (mean - 0.3 * s.signal_coef(target)).abs() / se,
            4.0,
        ));

        let img_shape = Shape::new(8, 8, 3);
        let x0 = test_image(seed, 1, img_shape);
        let eps = gaussian(seed, 1, img_shape);
        let mut early: f64 = 0.0;
        for t in (1..=total / 2).step_by(1.max(total / 200)) {
            let x_t = forward_marginal(&x0, t, s, &eps)?;
            early = early.max(max_diff(&recover_x0(&x_t, t, s, &eps)?, &x0));
        }
        out.push(Check::at_most("diffusion.recover_x0_max_err_first_half", early, 1e-9));
        let x_t = forward_marginal(&x0, total, s, &eps)?;
        let late = max_diff(&recover_x0(&x_t, total, s, &eps)?, &x0);
        out.push(Check::at_most("diffusion.recover_x0_err_final_step", late, 1e-6));

        let mut identity: f64 = 0.0;
        let mut min_var = f64::INFINITY;
        let mut min_kl = f64::INFINITY;
        for t in 1..=total {
            let x0 = test_image(seed, 100 + t as u64, Shape::new(3, 3, 3));
            let eps = gaussian(seed, 100 + t as u64, x0.shape());
            let x_t = forward_marginal(&x0, t, s, &eps)?;
            let combined = posterior_mean(&x_t, &x0, t, s)?;
            let reduced = posterior_mean_from_noise(&x_t, t, s, &eps)?;
            identity = identity.max(max_diff(&combined, &reduced));
            if t >= 2 {
                min_var = min_var.min(posterior_params(t, s)?.variance);
                min_kl = min_kl.min(kl_weight(t, s)?);
            }
        }
        out.push(Check::at_most("diffusion.posterior_identity_max_err", identity, 1e-10));
        if total >= 2 {
            out.push(Check::at_least("diffusion.posterior_variance_min", min_var, 0.0));
            out.push(Check::at_least("diffusion.kl_weight_min", min_kl, f64::MIN_POSITIVE));
        }

        let ddpm = NoiseSchedule::build(self.opts.schedule.ddpm())?;
        let mut alpha_bar = 1.0;
        let mut textbook: f64 = 0.0;
        let zero = ImageTensor::zeros(Shape::new(2, 2, 3));
        for t in 1..=ddpm.total_steps() {
            let prev = alpha_bar;
            let beta = ddpm.b_sq(t);
            let alpha = 1.0 - beta;
            alpha_bar *= alpha;
            let p = posterior_params(t, &ddpm)?;
            textbook = textbook
                .max((p.coef_x0 - prev.sqrt() * beta / (1.0 - alpha_bar)).abs())
                .max((p.coef_xt - alpha.sqrt() * (1.0 - prev) / (1.0 - alpha_bar)).abs())
                .max((p.variance - beta * (1.0 - prev) / (1.0 - alpha_bar)).abs());
            let x_t = gaussian(seed, 5000 + t as u64, zero.shape());
            let eps = gaussian(seed, 9000 + t as u64, zero.shape());
            let mean = x_t.lin_comb(
                1.0 / alpha.sqrt(),
                &eps,
                -beta / (alpha.sqrt() * (1.0 - alpha_bar).sqrt()),
            )?;
            textbook = textbook.max(max_diff(&posterior_step(&x_t, t, &ddpm, &eps, &zero)?, &mean));
        }
        out.push(Check::at_most("diffusion.ddpm_posterior_max_err", textbook, 1e-10));

        let short = NoiseSchedule::build(self.opts.schedule.with_steps(100))?;
        let mut excursion: f64 = 0.0;
        for i in 0..8u64 {
            let x0 = test_image(seed, 200 + i, Shape::new(8, 8, 3));
            let zero = ImageTensor::zeros(x0.shape());
            let mut x = forward_marginal(&x0, 100, &short, &gaussian(seed, 200 + i, x0.shape()))?;
            for t in (1..=100).rev() {
                let inv = 1.0 / short.noise_std(t);
                let eps_hat = x.lin_comb(inv, &x0, -short.signal_coef(t) * inv)?;
                x = posterior_step(&x, t, &short, &eps_hat, &zero)?;
            }
            let (lo, hi) = x.min_max();
            excursion = excursion.max(-0.5 - lo).max(hi - 1.5);
        }
        out.push(Check::at_most(
            "diffusion.ancestral_oracle_excursion",
            excursion.max(0.0),
            0.0,
        ));
        Ok(())
    }

    /// Max per-pixel |z| of the stepwise chain's mean and variance against the marginal.
    fn stepwise_vs_marginal(&self, x0: &ImageTensor, t: usize) -> Result<(f64, f64)> {
        let s = self.s;
        let seed = self.seed();
        let samples = par_map(
            self.opts.samples,
            self.opts.workers,
            |i| -> sadm_core::Result<ImageTensor> {
                let mut x = x0.clone();
                for step in 1..=t {
                    let eps = NoiseDraw::for_purpose(seed, NoisePurpose::Forward, step, i as u64, x0.shape()).sample();
                    x = forward_step(&x, step, s, &eps)?;
                }
                Ok(x)
            },
        );
        let len = x0.data().len();
        let (mut sum, mut sum_sq) = (vec![0.0; len], vec![0.0; len]);
        for x in samples {
            for (j, v) in x?.data().iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
        let n = self.opts.samples as f64;
        let v = s.noise_var(t);
        let (mean_se, var_se) = ((v / n).sqrt(), v * (2.0 / (n - 1.0)).sqrt());
        let (mut mean_z, mut var_z): (f64, f64) = (0.0, 0.0);
        for j in 0..len {
            let m = sum[j] / n;
            let var = (sum_sq[j] - n * m * m) / (n - 1.0);
            mean_z = mean_z.max((m - s.signal_coef(t) * x0.data()[j]).abs() / mean_se);
            var_z = var_z.max((var - v).abs() / var_se);
        }
        Ok((mean_z, var_z))
    }

    fn ddim_suite(&self, out: &mut Vec<Check>) -> Result<()> {
        let s = self.s;
        let total = self.total();
        let seed = self.seed();
        let shape = Shape::new(8, 8, 3);
        let x0 = test_image(seed, 300, shape);
        let eps = gaussian(seed, 300, shape);
        let oracle_step = |t: usize, p: usize, x_t: &ImageTensor| ddim_step(x_t, t, p, s, &eps, 0.0, None);

        let (t7, t3) = (total * 7 / 10, total * 3 / 10);
        let mut marginal: f64 = 0.0;
        for (t, p) in [(total, t7), (t7, t3), (t3, 0)] {
            if p >= t {
                continue;
            }
            let x_t = forward_marginal(&x0, t, s, &eps)?;
            marginal = marginal.max(max_diff(&oracle_step(t, p, &x_t)?, &forward_marginal(&x0, p, s, &eps)?));
        }
        out.push(Check::at_most("ddim.oracle_marginal_identity_max_err", marginal, 1e-9));

        let mut skipping: f64 = 0.0;
        for (t, q, p) in [
            (total, total * 3 / 5, total / 5),
            (total * 9 / 10, total * 9 / 20, 0),
            (total / 2, total / 2 - 1, 1),
        ] {
            if !(t > q && q > p) {
                continue;
            }
            let x_t = forward_marginal(&x0, t, s, &eps)?;
            let direct = oracle_step(t, p, &x_t)?;
            let composed = oracle_step(q, p, &oracle_step(t, q, &x_t)?)?;
            skipping = skipping.max(max_diff(&direct, &composed));
        }
        out.push(Check::at_most("ddim.step_skipping_max_err", skipping, 1e-9));

        let mut matching: f64 = 0.0;
        for t in 1..=total {
            for frac in [0.0, 0.5] {
                let sigma = frac * s.noise_var(t - 1).sqrt();
                let c = ddim_coefficients(t, t - 1, s, sigma)?;
                matching = matching
                    .max((c.m + c.n * s.signal_coef(t) - s.signal_coef(t - 1)).abs())
                    .max((c.n * c.n * s.noise_var(t) + sigma * sigma - s.noise_var(t - 1)).abs());
            }
        }
        out.push(Check::at_most("ddim.coefficient_matching_max_err", matching, 1e-12));

        let ddpm = NoiseSchedule::build(self.opts.schedule.ddpm())?;
        let alpha_bar: Vec<f64> = (0..=total)
            .scan(1.0, |acc, t| {
                if t > 0 {
                    *acc *= 1.0 - ddpm.b_sq(t);
                }
                Some(*acc)
            })
            .collect();
        let mut textbook: f64 = 0.0;
        for (t, p) in [(total, t7), (t7, t3), (t3, 0), (total, total - 1)] {
            if p >= t {
                continue;
            }
            let x_t = gaussian(seed, 400 + t as u64, shape);
            let z = gaussian(seed, 500 + p as u64, shape);
            let (ab_t, ab_p) = (alpha_bar[t], alpha_bar[p]);
            for frac in [0.0, 0.3] {
                let sigma = frac * (1.0 - ab_p).sqrt();
                let x0_hat = x_t.lin_comb(1.0 / ab_t.sqrt(), &eps, -(1.0 - ab_t).sqrt() / ab_t.sqrt())?;
                let reference = x0_hat
                    .lin_comb(ab_p.sqrt(), &eps, (1.0 - ab_p - sigma * sigma).sqrt())?
                    .lin_comb(1.0, &z, sigma)?;
                let ours = ddim_step(&x_t, t, p, &ddpm, &eps, sigma, Some(&z))?;
                textbook = textbook.max(max_diff(&ours, &reference));
            }
        }
        out.push(Check::at_most("ddim.ddpm_textbook_max_err", textbook, 1e-10));

        if total >= 10 {
            let gt = test_image(seed, 600, Shape::new(64, 64, 3));
            let cond = assemble_condition(&gt, &ConditionConfig::default())?;
            let oracle = OracleDenoiser::new(gt.clone(), s.clone());
            let opts = SampleOptions {
                seed,
                ..Default::default()
            };
            let flat = pyramid_sample(&PyramidPlan::flat(s, 10, (64, 64))?, &oracle, &cond, s, opts)?;
            out.push(Check::at_most("ddim.flat_oracle_max_err", max_diff(&flat, &gt), 1e-6));
            let plan = PyramidPlan::standard(s, (64, 64))?;
            let first = pyramid_sample(&plan, &oracle, &cond, s, opts)?;
            let db = psnr(&first, &gt, 1.0)?.min(sadm_core::quality::PSNR_CAP_DB);
            out.push(Check::at_least("ddim.pyramid_oracle_psnr_db", db, 45.0));
            let second = pyramid_sample(&plan, &oracle, &cond, s, opts)?;
            out.push(Check::at_most(
                "ddim.pyramid_determinism_max_diff",
                max_diff(&first, &second),
                0.0,
            ));
        }
        Ok(())
    }

    fn prior_suite(&self, out: &mut Vec<Check>) -> Result<()> {
        let seed = self.seed();
        let mut closed_form: f64 = 0.0;
        let mut lift_violations = 0usize;
        for i in 0..1000u64 {
            let mut img = test_image(seed, 1000 + i, Shape::new(8, 8, 3));
            if i % 2 == 0 {
                img = img.map(|v| v * v * 0.3);
            }
            let inverted = img.map(|v| 1.0 - v);
            let t0 = img.mean();
            let omega = 1.0 - t0;
            let mut dehazed = inverted.clone();
            for px in dehazed.data_mut().chunks_exact_mut(3) {
                let dark = px.iter().copied().fold(f64::INFINITY, f64::min);
                let tr = t0 + omega * (1.0 - omega * dark);
                px.iter_mut().for_each(|v| *v = (*v - 1.0) / tr + 1.0);
            }
            let explicit = dehazed.map(|v| 1.0 - v);
            let raw = dehaze_raw(&img)?;
            closed_form = closed_form.max(max_diff(&raw, &explicit));
            lift_violations += raw.data().iter().zip(img.data()).filter(|(r, x)| r < x).count();
        }
        out.push(Check::at_most("prior.dehaze_closed_form_max_err", closed_form, 1e-12));
        out.push(Check::at_most(
            "prior.dehaze_brightness_lift_violations",
            lift_violations as f64,
            0.0,
        ));

        let gray = dehaze_prior(&ImageTensor::filled(Shape::new(4, 4, 3), 0.5), false, DEFAULT_GAMMA)?;
        let gray_err = gray.data().iter().map(|v| (v - 4.0 / 7.0).abs()).fold(0.0, f64::max);
        out.push(Check::at_most("prior.dehaze_uniform_gray_err", gray_err, 1e-12));
        let white = ImageTensor::filled(Shape::new(4, 4, 3), 1.0);
        out.push(Check::at_most(
            "prior.dehaze_white_identity_err",
            max_diff(&dehaze_prior(&white, false, DEFAULT_GAMMA)?, &white),
            0.0,
        ));
        let dark = test_image(seed, 2000, Shape::new(16, 16, 3)).map(|v| 0.4 * v);
        let luma_mean = |img: &ImageTensor| -> Result<f64> { Ok(rgb_to_ycbcr(img)?.channel(0)?.mean()) };
        let gain = luma_mean(&dehaze_prior(&dark, true, DEFAULT_GAMMA)?)?
            - luma_mean(&dehaze_prior(&dark, false, DEFAULT_GAMMA)?)?;
        out.push(Check::at_least("prior.train_gamma_luma_gain", gain, f64::MIN_POSITIVE));

        let mut monotone = 0usize;
        for i in 0..20u64 {
            let img = test_image(seed, 3000 + i, Shape::new(12, 12, 3));
            let eq = hist_equalize(&img)?;
            for c in 0..3 {
                let mut pairs: Vec<(f64, f64)> = img
                    .data()
                    .iter()
                    .zip(eq.data())
                    .skip(c)
                    .step_by(3)
                    .map(|(a, b)| (*a, *b))
                    .collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                monotone += pairs.windows(2).filter(|w| w[0].1 > w[1].1).count();
            }
        }
        out.push(Check::at_most(
            "prior.hist_eq_monotone_violations",
            monotone as f64,
            0.0,
        ));
        let two_level = ImageTensor::from_fn(Shape::new(4, 4, 1), |y, _, _| if y < 2 { 0.2 } else { 0.8 });
        let expected = two_level.map(|v| if v < 0.5 { 0.5 } else { 1.0 });
        out.push(Check::at_most(
            "prior.hist_eq_two_level_err",
            max_diff(&hist_equalize(&two_level)?, &expected),
            0.0,
        ));

        let pos = position_channels(33, 17, 10)?;
        let excess = pos.data().iter().map(|v| v.abs() - 1.0).fold(0.0, f64::max);
        out.push(Check::at_most("prior.position_channel_bound_excess", excess, 0.0));
        let stack = assemble_condition(
            &test_image(seed, 4000, Shape::new(8, 8, 3)),
            &ConditionConfig::default(),
        )?;
        out.push(Check::at_most(
            "prior.denoiser_input_channels_minus_13",
            (stack.channels() as f64 + 3.0 - 13.0).abs(),
            0.0,
        ));
        Ok(())
    }

    fn losses_suite(&self, out: &mut Vec<Check>) -> Result<()> {
        let seed = self.seed();
        let cfg = LossConfig::default();
        let extractor = AvgPoolExtractor::default();
        let shape = Shape::new(16, 16, 3);
        let (mut range, mut symmetry, mut self_sim, mut idempotence, mut decomposition) =
            (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut perfect: f64 = 0.0;
        for i in 0..50u64 {
            let y = test_image(seed, 5000 + i, shape);
            let fx = test_image(seed, 6000 + i, shape).map(|v| 0.05 + 0.9 * v * (0.3 + (i % 7) as f64 / 10.0));
            let w = brightness_weight(&fx, &y, cfg.hist_bins)?;
            range = range.max(-w).max(w - 1.0);
            symmetry = symmetry.max((w - brightness_weight(&y, &fx, cfg.hist_bins)?).abs());
            self_sim = self_sim.max((brightness_weight(&y, &y, cfg.hist_bins)? - 1.0).abs());
            let lambda = gtmean_loss(&fx, &y, &cfg)?.lambda_gt;
            idempotence = idempotence.max((gtmean_loss(&fx.scale(lambda), &y, &cfg)?.lambda_gt - 1.0).abs());
            let eps = gaussian(seed, 5000 + i, shape);
            let eps_hat = gaussian(seed, 6000 + i, shape);
            let r = total_loss(&fx, &y, &eps_hat, &eps, &extractor, &cfg)?;
            decomposition = decomposition.max((r.total - (r.l_gt + r.l_p + r.l1_noise)).abs());
            decomposition = decomposition.max((r.l1_noise - l1(&eps_hat, &eps)?).abs());
            perfect = perfect.max(total_loss(&y, &y, &eps, &eps, &extractor, &cfg)?.total.abs());
        }
        out.push(Check::at_most("losses.bhattacharyya_range_excess", range.max(0.0), 0.0));
        out.push(Check::at_most("losses.bhattacharyya_symmetry_err", symmetry, 1e-15));
        out.push(Check::at_most("losses.bhattacharyya_self_err", self_sim, 1e-12));
        let p = [0.1, 0.2, 0.3, 0.4];
        out.push(Check::at_most(
            "losses.bhattacharyya_disjoint_value",
            bhattacharyya_coefficient(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.5])
                + (bhattacharyya_coefficient(&p, &p) - 1.0).abs(),
            1e-15,
        ));
        out.push(Check::at_most(
            "losses.gtmean_alignment_idempotence_err",
            idempotence,
            1e-12,
        ));
        out.push(Check::at_most("losses.total_decomposition_err", decomposition, 0.0));
        out.push(Check::at_most("losses.perfect_prediction_total", perfect, 0.0));

        let y = test_image(seed, 7000, shape);
        let delta = 0.05;
        let offset = perception_loss(&y.map(|v| v + delta), &y, &extractor, &cfg)?;
        let weights: f64 = cfg.layer_weights.iter().map(|(_, w)| w).sum();
        out.push(Check::at_most(
            "losses.perception_offset_closed_form_err",
            (offset - cfg.lambda_p * weights * delta).abs(),
            1e-12,
        ));

        let (mut psnr_err, mut ssim_err): (f64, f64) = (0.0, 0.0);
        for fixture in metric_fixtures() {
            psnr_err = psnr_err.max((psnr(&fixture.a, &fixture.b, 1.0)? - fixture.psnr_db).abs());
            let measured = ssim(&fixture.a, &fixture.b, &fixture.params)?;
            ssim_err = ssim_err
                .max((measured - fixture.ssim).abs())
                .max((measured - windowed_ssim(&fixture.a, &fixture.b, &fixture.params)).abs());
        }
        out.push(Check::at_most("losses.psnr_fixture_err_db", psnr_err, 1e-4));
        out.push(Check::at_most("losses.ssim_fixture_err", ssim_err, 1e-6));
        let a = test_image(seed, 8000, shape);
        out.push(Check::at_most(
            "losses.ssim_self_err",
            (ssim(&a, &a, &SsimParams::default())? - 1.0).abs(),
            0.0,
        ));
        let lum = luminance(&a)?;
        out.push(Check::at_most(
            "losses.psnr_identical_is_infinite",
            if psnr(&lum, &lum, 1.0)?.is_infinite() { 0.0 } else { 1.0 },
            0.0,
        ));
        Ok(())
    }
}

/// A metric fixture pair and its reference values.
pub struct MetricFixture {
    pub name: &'static str,
    pub a: ImageTensor,
    pub b: ImageTensor,
    pub params: SsimParams,
    pub ssim: f64,
    pub psnr_db: f64,
}

fn pattern_a(h: usize, w: usize, c: usize) -> ImageTensor {
    ImageTensor::from_fn(Shape::new(h, w, c), |y, x, ch| {
        ((y * 7 + x * 13 + ch * 5) % 17) as f64 / 16.0
    })
}

fn pattern_b(h: usize, w: usize, c: usize) -> ImageTensor {
    ImageTensor::from_fn(Shape::new(h, w, c), |y, x, ch| {
        ((y * 3 + x * 11 + ch * 7 + 4) % 19) as f64 / 18.0 * 0.8 + 0.1
    })
}

fn pattern_c(h: usize, w: usize, c: usize) -> ImageTensor {
    let a = pattern_a(h, w, c);
    ImageTensor::from_fn(a.shape(), |y, x, ch| {
        a.get(y, x, ch) * 0.9 + 0.05 + ((y * 5 + x * 3 + ch) % 7) as f64 / 140.0
    })
}

/// Integer-pattern image pairs with reference SSIM/PSNR from scikit-image
/// (Gaussian weights, σ = 1.5, population covariance); the 8×8 pair uses a
/// 7-tap window and was evaluated directly with numpy.
pub fn metric_fixtures() -> Vec<MetricFixture> {
    vec![
        MetricFixture {
            name: "8x8x1 window 7",
            a: pattern_a(8, 8, 1),
            b: pattern_b(8, 8, 1),
            params: SsimParams {
                window: 7,
                ..Default::default()
            },
            ssim: 0.3132423821170227,
            psnr_db: 8.725757280180073,
        },
        MetricFixture {
            name: "16x16x3 unrelated",
            a: pattern_a(16, 16, 3),
            b: pattern_b(16, 16, 3),
            params: SsimParams::default(),
            ssim: -0.05841727227494083,
            psnr_db: 8.287397634478129,
        },
        MetricFixture {
            name: "16x16x3 near copy",
            a: pattern_a(16, 16, 3),
            b: pattern_c(16, 16, 3),
            params: SsimParams::default(),
            ssim: 0.992936258688338,
            psnr_db: 27.845685504627497,
        },
    ]
}

/// Per-window SSIM with an explicit 2-D Gaussian weight table.
fn windowed_ssim(a: &ImageTensor, b: &ImageTensor, p: &SsimParams) -> f64 {
    let win = p.window;
    let centre = (win as f64 - 1.0) / 2.0;
    let mut weights = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let d2 = (i as f64 - centre).powi(2) + (j as f64 - centre).powi(2);
            weights[i * win + j] = (-d2 / (2.0 * p.sigma * p.sigma)).exp();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let (c1, c2) = ((p.k1 * p.peak).powi(2), (p.k2 * p.peak).powi(2));
    let mut acc = 0.0;
    for c in 0..a.channels() {
        let (mut sum, mut count) = (0.0, 0.0);
        for y0 in 0..=a.height() - win {
            for x0 in 0..=a.width() - win {
                let mut m = [0.0; 5];
                for i in 0..win {
                    for j in 0..win {
                        let w = weights[i * win + j];
                        let (u, v) = (a.get(y0 + i, x0 + j, c), b.get(y0 + i, x0 + j, c));
                        m[0] += w * u;
                        m[1] += w * v;
                        m[2] += w * u * u;
                        m[3] += w * v * v;
                        m[4] += w * u * v;
                    }
                }
                let (va, vb, cov) = (m[2] - m[0] * m[0], m[3] - m[1] * m[1], m[4] - m[0] * m[1]);
                sum +=
                    (2.0 * m[0] * m[1] + c1) * (2.0 * cov + c2) / ((m[0] * m[0] + m[1] * m[1] + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        acc += sum / count;
    }
    acc / a.channels() as f64
}
