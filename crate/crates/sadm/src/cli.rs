//! Command-line surface. `main` parses [`Cli`] and hands it to [`run`].

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sadm_core::diffusion::forward_marginal;
use sadm_core::image::pad_to_multiple;
use sadm_core::prior::{assemble_condition, dehaze_prior, hist_equalize, ConditionConfig, DEFAULT_GAMMA};
use sadm_core::quality::{psnr, psnr_capped, ssim, SsimParams, PSNR_CAP_DB};
use sadm_core::sampler::{
    pyramid_sample, OracleDenoiser, PyramidOrientation, PyramidPlan, SampleOptions, DEFAULT_FACTORS,
};
use sadm_core::schedule::sweep;
use sadm_core::{ImageTensor, NoiseDraw, NoisePurpose, NoiseSchedule, ScheduleConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{encode_png, read_png, write_png};
use crate::table::{csv_string, json_string, JsonTable};
use crate::verify::{self, Suite, Tamper, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "sadm", version, about = "Signal-attenuation diffusion toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Number of diffusion steps T.
    #[arg(long, global = true, default_value_t = 1000)]
    pub steps: usize,
    /// Per-step attenuation ratio k_t / k_{t-1}.
    #[arg(long, global = true, default_value_t = 0.999)]
    pub ratio: f64,
    /// First value of the linear b² ramp.
    #[arg(long = "b2-start", global = true, default_value_t = 4e-5)]
    pub b2_start: f64,
    /// Last value of the linear b² ramp.
    #[arg(long = "b2-end", global = true, default_value_t = 1e-2)]
    pub b2_end: f64,
    /// Use k ≡ 1 and a² = 1 − b², the standard DDPM schedule.
    #[arg(long, global = true)]
    pub ddpm: bool,
    /// Seed for every random draw.
    #[arg(long, global = true, env = "SADM_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl GlobalArgs {
    pub fn schedule_config(&self) -> ScheduleConfig {
        ScheduleConfig {
            total_steps: self.steps,
            attenuation_ratio: self.ratio,
            b_sq_start: self.b2_start,
            b_sq_end: self.b2_end,
            degenerate_ddpm: self.ddpm,
        }
    }

    fn run_config(&self, command: &str, params: serde_json::Value) -> RunConfig {
        RunConfig {
            command: command.into(),
            seed: self.seed,
            schedule: self.schedule_config().into(),
            params,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the schedule table as CSV or JSON.
    Schedule(ScheduleArgs),
    /// Noise an image to step t in one jump.
    Forward(ForwardArgs),
    /// Apply the dehaze or histogram-equalization prior to an image.
    Prior(PriorArgs),
    /// Sample with the oracle denoiser that knows the ground truth.
    SampleOracle(SampleOracleArgs),
    /// Run the identity and Monte-Carlo checks.
    Verify(VerifyArgs),
    /// PSNR and SSIM between two images.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Comma-separated ratios; one table per ratio, each cut at its breakdown step.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    /// Output file (a directory for a CSV sweep). Stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub t: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Sidecar JSON path; defaults to the output path with a `.json` extension.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorMode {
    Dehaze,
    Hiseq,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    pub mode: PriorMode,
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Gamma-correct the dehaze output as during training.
    #[arg(long)]
    pub train_mode: bool,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SampleOracleArgs {
    /// Ground-truth image the oracle denoiser predicts.
    pub gt: PathBuf,
    /// Low-light conditioning image; defaults to the ground truth.
    #[arg(long)]
    pub low: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub pyramid: Switch,
    /// Downscale factor per step, listed by output time (finest first).
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FACTORS)]
    pub factors: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON path; defaults to the output path with a `.json` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    pub suite: Suite,
    /// Monte-Carlo draws per statistical check.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Threads for Monte-Carlo checks; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Shift a_T by DELTA before checking, given as `T:DELTA`.
    #[arg(long = "tamper-a", value_parser = parse_tamper)]
    pub tamper: Option<Tamper>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// SSIM Gaussian window size.
    #[arg(long, default_value_t = 11)]
    pub window: usize,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_tamper(s: &str) -> Result<Tamper, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    ChecksFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Self::Ok => 0,
            Self::ChecksFailed => 1,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Schedule(args) => schedule(g, args),
        Command::Forward(args) => forward(g, args),
        Command::Prior(args) => prior(g, args),
        Command::SampleOracle(args) => sample_oracle(g, args),
        Command::Verify(args) => run_verify(g, args),
        Command::Metrics(args) => metrics(args),
    }
    .map_err(|e| match e {
        Error::Core(sadm_core::Error::InvalidConfig(msg)) => Error::Usage(msg.into()),
        other => other,
    })
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(Error::io(p)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(Error::io("<stdout>")),
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn sibling_json(out: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| out.with_extension("json"))
}

fn schedule(g: &GlobalArgs, args: &ScheduleArgs) -> Result<Outcome> {
    let config = g.schedule_config();
    let Some(ratios) = &args.sweep else {
        let s = NoiseSchedule::build(config)?;
        let text = if args.json {
            json_string(&JsonTable::new(&s, None))?
        } else {
            csv_string(&s)?
        };
        write_out(args.out.as_deref(), &text)?;
        return Ok(Outcome::Ok);
    };
    let entries = sweep(&config, ratios)?;
    if args.json {
        let tables: Vec<JsonTable> = entries.iter().map(JsonTable::from).collect();
        write_out(args.out.as_deref(), &pretty(&tables)?)?;
        return Ok(Outcome::Ok);
    }
    let dir = args
        .out
        .as_deref()
        .ok_or_else(|| Error::Usage("a CSV sweep writes one file per ratio; pass --out DIR".into()))?;
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    for entry in &entries {
        let path = dir.join(format!("schedule_ratio_{}.csv", entry.ratio));
        fs::write(&path, csv_string(&entry.schedule)?).map_err(Error::io(&path))?;
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct SampleStats {
    mean: f64,
    var: f64,
    min: f64,
    max: f64,
}

impl SampleStats {
    fn of(img: &ImageTensor) -> Self {
        let mean = img.mean();
        let n = img.data().len() as f64;
        let var = img.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let (min, max) = img.min_max();
        Self { mean, var, min, max }
    }
}

fn forward(g: &GlobalArgs, args: &ForwardArgs) -> Result<Outcome> {
    let s = NoiseSchedule::build(g.schedule_config())?;
    s.check_timestep(args.t, 0)?;
    let bytes = fs::read(&args.input).map_err(Error::io(&args.input))?;
    let decoded = crate::io::decode_png(&bytes)?;
    let x0 = decoded.image;
    let pre_clamp = if args.t == 0 {
        fs::write(&args.out, &bytes).map_err(Error::io(&args.out))?;
        x0
    } else {
        let eps = NoiseDraw::for_purpose(g.seed, NoisePurpose::Marginal, args.t, 0, x0.shape()).sample();
        let x_t = forward_marginal(&x0, args.t, &s, &eps)?;
        write_png(&args.out, &x_t.clamp01(), decoded.bit_depth)?;
        x_t
    };
    let row = s.row(args.t);
    let sidecar = json!({
        "run_config": g.run_config("forward", json!({
            "input": args.input, "t": args.t, "out": args.out,
        })),
        "coefficients": {
            "t": row.t,
            "k": row.k,
            "a": row.a,
            "b_sq": row.b_sq,
            "signal_coef": row.signal_coef,
            "log_signal_coef": row.log_signal_coef,
            "noise_std": row.noise_std,
            "noise_var": s.noise_var(args.t),
            "energy": s.energy(args.t),
        },
        "pre_clamp": SampleStats::of(&pre_clamp),
        "clamped_fraction": pre_clamp.data().iter().filter(|v| !(0.0..=1.0).contains(*v)).count() as f64
            / pre_clamp.data().len() as f64,
    });
    let path = sibling_json(&args.out, args.sidecar.as_ref());
    fs::write(&path, pretty(&sidecar)?).map_err(Error::io(&path))?;
    Ok(Outcome::Ok)
}

/// Color planes of a decoded PNG as RGB; gray is replicated, alpha dropped.
/// The flag records whether the source was gray.
fn as_rgb(img: &ImageTensor) -> Result<(ImageTensor, bool)> {
    match img.channels() {
        1 | 2 => {
            let gray = img.channel(0)?;
            Ok((ImageTensor::stack_channels(&[&gray, &gray, &gray])?, true))
        }
        3 => Ok((img.clone(), false)),
        _ => {
            let planes = [img.channel(0)?, img.channel(1)?, img.channel(2)?];
            Ok((
                ImageTensor::stack_channels(&[&planes[0], &planes[1], &planes[2]])?,
                false,
            ))
        }
    }
}

fn restore_layout(rgb: &ImageTensor, gray: bool) -> Result<ImageTensor> {
    if gray {
        Ok(rgb.channel(0)?)
    } else {
        Ok(rgb.clone())
    }
}

fn prior(_g: &GlobalArgs, args: &PriorArgs) -> Result<Outcome> {
    let decoded = read_png(&args.input)?;
    let (rgb, gray) = as_rgb(&decoded.image)?;
    let out = match args.mode {
        PriorMode::Dehaze => dehaze_prior(&rgb, args.train_mode, args.gamma)?,
        PriorMode::Hiseq => hist_equalize(&rgb)?,
    };
    write_png(&args.out, &restore_layout(&out.clamp01(), gray)?, decoded.bit_depth)?;
    Ok(Outcome::Ok)
}

fn sample_oracle(g: &GlobalArgs, args: &SampleOracleArgs) -> Result<Outcome> {
    let s = NoiseSchedule::build(g.schedule_config())?;
    let decoded = read_png(&args.gt)?;
    let (gt, gray) = as_rgb(&decoded.image)?;
    let low = match &args.low {
        Some(path) => as_rgb(&read_png(path)?.image)?.0,
        None => gt.clone(),
    };
    low.ensure_shape(gt.shape())?;

    let factors: Vec<usize> = match args.pyramid {
        Switch::On => args.factors.clone(),
        Switch::Off => vec![1; args.factors.len()],
    };
    let multiple = factors.iter().copied().max().unwrap_or(1);
    let padded_gt = pad_to_multiple(&gt, multiple)?;
    let padded_low = pad_to_multiple(&low, multiple)?.image;
    let (h, w) = (padded_gt.image.height(), padded_gt.image.width());
    let plan = PyramidPlan::new(&s, factors.len(), &factors, PyramidOrientation::CoarseToFine, (h, w))?;

    let cond = assemble_condition(&padded_low, &ConditionConfig::default())?;
    let oracle = OracleDenoiser::new(padded_gt.image.clone(), s.clone());
    let sampled = pyramid_sample(
        &plan,
        &oracle,
        &cond,
        &s,
        SampleOptions {
            seed: g.seed,
            ..Default::default()
        },
    )?;
    let result = padded_gt.unpad(&sampled)?;

    let written = restore_layout(&result, gray)?;
    let bytes = encode_png(&written, decoded.bit_depth)?;
    fs::write(&args.out, &bytes).map_err(Error::io(&args.out))?;
    let quantized = crate::io::decode_png(&bytes)?.image;
    let reference = restore_layout(&gt, gray)?;

    let report = json!({
        "run_config": g.run_config("sample-oracle", json!({
            "gt": args.gt, "low": args.low, "pyramid": args.pyramid == Switch::On,
            "factors": factors, "out": args.out,
        })),
        "psnr_db": psnr_capped(&quantized, &reference, 1.0)?,
        "psnr_db_unquantized": psnr(&result, &gt, 1.0)?.min(PSNR_CAP_DB),
        "padded_shape": [h, w],
        "plan": plan.steps.iter().map(|p| json!({"t": p.t, "factor": p.factor})).collect::<Vec<_>>(),
    });
    let path = sibling_json(&args.out, args.report.as_ref());
    fs::write(&path, pretty(&report)?).map_err(Error::io(&path))?;
    Ok(Outcome::Ok)
}

fn run_verify(g: &GlobalArgs, args: &VerifyArgs) -> Result<Outcome> {
    let opts = VerifyOptions {
        suite: args.suite,
        samples: args.samples,
        seed: g.seed,
        schedule: g.schedule_config(),
        tamper: args.tamper,
        workers: args.workers,
    };
    let report = verify::run(&opts)?;
    for check in &report.checks {
        let status = if check.pass { "ok  " } else { "FAIL" };
        eprintln!(
            "{status} {:<48} {:>12.4e} (tol {:.1e})",
            check.name, check.measured, check.tolerance
        );
    }
    write_out(args.out.as_deref(), &pretty(&report)?)?;
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::ChecksFailed
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
}

fn metrics(args: &MetricsArgs) -> Result<Outcome> {
    let a = read_png(&args.a)?.image;
    let b = read_png(&args.b)?.image;
    let params = SsimParams {
        window: args.window,
        ..Default::default()
    };
    let report = MetricsReport {
        psnr_db: psnr_capped(&a, &b, 1.0)?,
        ssim: ssim(&a, &b, &params)?,
    };
    write_out(args.out.as_deref(), &pretty(&report)?)?;
    Ok(Outcome::Ok)
}
