//! The attenuated noise schedule.
//!
//! Each forward step is `x_t = k_t (a_t x_{t-1} + b_t ε_t)` where `k_t` decays
//! geometrically (`k_t = r·k_{t-1}`, `k_0 = 1`), `b_t²` ramps linearly, and
//! `a_t` is whatever the recurrence
//!
//! ```text
//! k_{t-1}^4 a_t^2 + b_t^2 = k_t^2
//! ```
//!
//! forces. That recurrence pins the second moment of a unit-energy input to
//! `E‖x_t‖² = k_t^4` and gives the marginal
//! `x_t = k̄_t ā_t x_0 + sqrt(k_t^4 − k̄_t² ā_t²) ε̃`.
//! With `k ≡ 1` everything collapses to the usual DDPM schedule.
//!
//! `a_t` is not bounded by 1: as `k_{t-1}` shrinks the recurrence pushes
//! `a_t` above 1 (≈2.6 at t=1000 for r=0.999), while `k_t a_t` stays below 1
//! so the marginal signal still decays.

use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    /// Number of diffusion steps `T`.
    pub total_steps: usize,
    /// Per-step multiplier of `k`, in `(0, 1]`.
    pub attenuation_ratio: f64,
    /// `b_1²`.
    pub b_sq_start: f64,
    /// `b_T²`.
    pub b_sq_end: f64,
    /// Force `k_t ≡ 1`, i.e. plain DDPM.
    pub degenerate_ddpm: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            attenuation_ratio: 0.999,
            b_sq_start: 4e-5,
            b_sq_end: 1e-2,
            degenerate_ddpm: false,
        }
    }
}

impl ScheduleConfig {
    pub fn with_steps(mut self, total_steps: usize) -> Self {
        self.total_steps = total_steps;
        self
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.attenuation_ratio = ratio;
        self
    }

    pub fn ddpm(mut self) -> Self {
        self.degenerate_ddpm = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::InvalidConfig("total_steps must be at least 1"));
        }
        if !(self.attenuation_ratio > 0.0 && self.attenuation_ratio <= 1.0) {
            return Err(Error::InvalidConfig("attenuation_ratio must lie in (0, 1]"));
        }
        if !(self.b_sq_start > 0.0) {
            return Err(Error::InvalidConfig("b_sq_start must be positive"));
        }
        if !(self.b_sq_end >= self.b_sq_start && self.b_sq_end < 1.0) {
            return Err(Error::InvalidConfig("b_sq_end must satisfy b_sq_start <= b_sq_end < 1"));
        }
        Ok(())
    }

    /// `b_t²` on the linear ramp; both endpoints are hit exactly.
    pub fn b_sq_at(&self, t: usize) -> f64 {
        if self.total_steps == 1 || t <= 1 {
            return self.b_sq_start;
        }
        if t >= self.total_steps {
            return self.b_sq_end;
        }
        let frac = (t - 1) as f64 / (self.total_steps - 1) as f64;
        self.b_sq_start + (self.b_sq_end - self.b_sq_start) * frac
    }
}

/// Per-step and cumulative coefficients for `t = 0..=T`.
///
/// Index 0 holds the empty-product conventions: `k_0 = a_0 = k̄_0 = ā_0 = 1`,
/// `b_0² = 0`, signal coefficient 1 and noise variance 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    steps: usize,
    k: Vec<f64>,
    a: Vec<f64>,
    b_sq: Vec<f64>,
    k_bar: Vec<f64>,
    a_bar: Vec<f64>,
    signal_coef: Vec<f64>,
    log_signal_coef: Vec<f64>,
    noise_var: Vec<f64>,
}

/// One row of the tabulated schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub t: usize,
    pub k: f64,
    pub a: f64,
    pub b_sq: f64,
    /// `k̄_t ā_t`.
    pub signal_coef: f64,
    /// `sqrt(k_t^4 − k̄_t² ā_t²)`.
    pub noise_std: f64,
    pub log_signal_coef: f64,
}

/// Result of building one ratio of a sweep; `breakdown` is the first step at
/// which the recurrence had no solution, and the schedule stops just before it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub ratio: f64,
    pub schedule: NoiseSchedule,
    pub breakdown: Option<usize>,
}

impl NoiseSchedule {
    /// Builds the full schedule, failing at the first `t` with `k_t² ≤ b_t²`.
    pub fn build(config: ScheduleConfig) -> Result<Self> {
        let (schedule, failure) = Self::build_inner(config)?;
        match failure {
            Some(err) => Err(err),
            None => Ok(schedule),
        }
    }

    /// Builds as many steps as the recurrence allows. Returns the valid prefix
    /// and the breakdown step, if any. The `b²` ramp is still laid out over
    /// `config.total_steps`.
    pub fn build_prefix(config: ScheduleConfig) -> Result<(Self, Option<usize>)> {
        let (schedule, failure) = Self::build_inner(config)?;
        let breakdown = failure.map(|e| match e {
            Error::NonPositiveSignal { t, .. } => t,
            _ => unreachable!("build_inner only defers NonPositiveSignal"),
        });
        Ok((schedule, breakdown))
    }

    fn build_inner(config: ScheduleConfig) -> Result<(Self, Option<Error>)> {
        config.validate()?;
        let cap = config.total_steps + 1;
        let mut s = Self {
            config,
            steps: 0,
            k: Vec::with_capacity(cap),
            a: Vec::with_capacity(cap),
            b_sq: Vec::with_capacity(cap),
            k_bar: Vec::with_capacity(cap),
            a_bar: Vec::with_capacity(cap),
            signal_coef: Vec::with_capacity(cap),
            log_signal_coef: Vec::with_capacity(cap),
            noise_var: Vec::with_capacity(cap),
        };
        s.k.push(1.0);
        s.a.push(1.0);
        s.b_sq.push(0.0);
        s.k_bar.push(1.0);
        s.a_bar.push(1.0);
        s.signal_coef.push(1.0);
        s.log_signal_coef.push(0.0);
        s.noise_var.push(0.0);

        for t in 1..=config.total_steps {
            let k_prev = s.k[t - 1];
            let k = if config.degenerate_ddpm {
                1.0
            } else {
                k_prev * config.attenuation_ratio
            };
            let b_sq = config.b_sq_at(t);
            let k_sq = k * k;
            let k_prev_sq = k_prev * k_prev;
            let a_sq = (k_sq - b_sq) / (k_prev_sq * k_prev_sq);
            if !(a_sq > 0.0) {
                return Ok((s, Some(Error::NonPositiveSignal { t, k_sq, b_sq })));
            }
            let a = sqrt(a_sq);
            s.k.push(k);
            s.a.push(a);
            s.b_sq.push(b_sq);
            s.k_bar.push(s.k_bar[t - 1] * k);
            s.a_bar.push(s.a_bar[t - 1] * a);
            s.signal_coef.push(s.signal_coef[t - 1] * k * a);
            s.log_signal_coef
                .push(s.log_signal_coef[t - 1] + log(k) + 0.5 * log(a_sq));
            // One-step propagation of the marginal variance; all terms are
            // non-negative so this avoids the k⁴ − (k̄ā)² cancellation at small t.
            s.noise_var.push(k_sq * a_sq * s.noise_var[t - 1] + k_sq * b_sq);
            s.steps = t;
        }
        Ok((s, None))
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    /// Last valid timestep (equals `config.total_steps` unless built as a prefix).
    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn k(&self, t: usize) -> f64 {
        self.k[t]
    }

    pub fn a(&self, t: usize) -> f64 {
        self.a[t]
    }

    pub fn b_sq(&self, t: usize) -> f64 {
        self.b_sq[t]
    }

    pub fn k_bar(&self, t: usize) -> f64 {
        self.k_bar[t]
    }

    pub fn a_bar(&self, t: usize) -> f64 {
        self.a_bar[t]
    }

    /// `k̄_t ā_t`, the marginal multiplier of `x_0`.
    pub fn signal_coef(&self, t: usize) -> f64 {
        self.signal_coef[t]
    }

    pub fn log_signal_coef(&self, t: usize) -> f64 {
        self.log_signal_coef[t]
    }

    /// `k_t^4 − k̄_t² ā_t²`, the marginal noise variance.
    pub fn noise_var(&self, t: usize) -> f64 {
        self.noise_var[t]
    }

    pub fn noise_std(&self, t: usize) -> f64 {
        sqrt(self.noise_var[t])
    }

    /// Expected second moment of `x_t` for a unit-energy input, `k_t^4`.
    pub fn energy(&self, t: usize) -> f64 {
        let k_sq = self.k[t] * self.k[t];
        k_sq * k_sq
    }

    /// `k̄_p ā_p / (k̄_t ā_t)`, evaluated in the log domain.
    pub fn signal_ratio(&self, p: usize, t: usize) -> f64 {
        exp(self.log_signal_coef[p] - self.log_signal_coef[t])
    }

    /// `1 / (k̄_t ā_t)` in the log domain.
    pub fn inv_signal_coef(&self, t: usize) -> f64 {
        exp(-self.log_signal_coef[t])
    }

    /// Relative residual `|k_{t-1}^4 a_t^2 + b_t^2 − k_t^2| / k_t^2` of the
    /// recurrence at step `t ≥ 1`.
    pub fn recurrence_residual(&self, t: usize) -> f64 {
        let kp = self.k[t - 1] * self.k[t - 1];
        let k_sq = self.k[t] * self.k[t];
        let lhs = kp * kp * self.a[t] * self.a[t] + self.b_sq[t];
        (lhs - k_sq).abs() / k_sq
    }

    pub fn check_timestep(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.steps {
            return Err(Error::TimestepOutOfRange {
                t,
                min,
                max: self.steps,
            });
        }
        Ok(())
    }

    /// Returns a copy with `a_t` shifted by `delta` and nothing else updated.
    /// Meant for fault-injection runs of the verification harness.
    pub fn with_perturbed_a(mut self, t: usize, delta: f64) -> Self {
        self.a[t] += delta;
        self
    }

    pub fn row(&self, t: usize) -> ScheduleRow {
        ScheduleRow {
            t,
            k: self.k[t],
            a: self.a[t],
            b_sq: self.b_sq[t],
            signal_coef: self.signal_coef[t],
            noise_std: self.noise_std(t),
            log_signal_coef: self.log_signal_coef[t],
        }
    }

    /// One row per timestep `0..=T`.
    pub fn rows(&self) -> impl ExactSizeIterator<Item = ScheduleRow> + '_ {
        (0..self.steps + 1).map(|t| self.row(t))
    }
}

/// Builds one schedule per attenuation ratio, keeping everything else from
/// `base`. Ratios whose recurrence breaks down yield their valid prefix.
pub fn sweep(base: &ScheduleConfig, ratios: &[f64]) -> Result<Vec<SweepEntry>> {
    ratios
        .iter()
        .map(|&ratio| {
            let (schedule, breakdown) = NoiseSchedule::build_prefix(base.with_ratio(ratio))?;
            Ok(SweepEntry {
                ratio,
                schedule,
                breakdown,
            })
        })
        .collect()
}
