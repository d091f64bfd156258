use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use incode_cli::config::{load_config_file, ModelKind, PartialConfig, RunConfig, SweepAxis, Task};
use incode_cli::{exit_code_for, init_threads_from_env, run};

#[derive(Parser)]
#[command(
    name = "incode",
    about = "Conditioned sinusoidal implicit neural representation fitting",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an image representation (PNG in, PNG out)
    FitImage(CommonArgs),
    /// Fit an audio representation (mono PCM16 WAV)
    FitAudio(CommonArgs),
    /// Fit a binary occupancy volume (raw f32 + JSON sidecar)
    FitOccupancy(CommonArgs),
    /// Fit a noisy image under the photon/readout sensor model
    Denoise(CommonArgs),
    /// Train on a downsampled image, evaluate on the full grid
    Superres(CommonArgs),
    /// Fit from a random subset of pixels and fill in the rest
    Inpaint(CommonArgs),
    /// Sparse-view CT reconstruction through the projection loss
    CtRecon(CommonArgs),
    /// Train both models on a chirp and compare first-layer bandwidth
    Spectrum(CommonArgs),
    /// Depth or width sweep of the image task, both models per cell
    Sweep(CommonArgs),
}

fn parse_profile(s: &str) -> Result<incode_core::conditioning::HarmonizerProfile, String> {
    match s {
        "image" => Ok(incode_core::conditioning::HarmonizerProfile::Image),
        "denoise" => Ok(incode_core::conditioning::HarmonizerProfile::Denoise),
        other => Err(format!(
            "unknown harmonizer profile {other:?} (image|denoise)"
        )),
    }
}

fn parse_quad(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!(
            "expected 4 comma-separated values, got {}",
            parts.len()
        ));
    }
    let mut out = [0.0; 4];
    for (dst, part) in out.iter_mut().zip(&parts) {
        *dst = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad value {part:?}: {e}"))?;
    }
    Ok(out)
}

#[derive(Args)]
struct CommonArgs {
    /// Conditioned model or the plain-sine baseline
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Input signal path (task-appropriate format); a generated fixture is
    /// used when omitted
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file with flat keys mirroring these flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// End-of-training learning-rate multiplier in (0, 1]
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "omega0-first")]
    omega0_first: Option<f64>,
    #[arg(long = "omega0-hidden")]
    omega0_hidden: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    /// Hidden layer count
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Max points per evaluation batch
    #[arg(long)]
    chunk: Option<usize>,
    /// Penalty weights as "l1,l2,l3,l4"
    #[arg(long, value_parser = parse_quad)]
    lambda: Option<[f64; 4]>,
    /// Harmonizer layer stack ("image" or "denoise")
    #[arg(long, value_parser = parse_profile)]
    harmonizer: Option<incode_core::conditioning::HarmonizerProfile>,
    /// Pin the effective activation quadruple "a,b,c,d" (bypasses the
    /// conditioning networks)
    #[arg(long = "freeze-params", value_parser = parse_quad)]
    freeze_params: Option<[f64; 4]>,
    /// Mean photon count at full scale (denoise)
    #[arg(long)]
    tau: Option<f64>,
    /// Mean readout count (denoise)
    #[arg(long)]
    ro: Option<f64>,
    /// Downsampling factor (superres)
    #[arg(long)]
    factor: Option<usize>,
    /// Supervised pixel fraction (inpaint)
    #[arg(long = "mask-fraction")]
    mask_fraction: Option<f64>,
    /// Projection count (ct-recon)
    #[arg(long)]
    angles: Option<usize>,
    /// Gaussian detector noise std on synthetic sinograms (ct-recon)
    #[arg(long = "detector-noise")]
    detector_noise: Option<f64>,
    /// Spectrum energy cutoff as a fraction of Nyquist
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long = "sweep-axis", value_enum)]
    sweep_axis: Option<SweepAxis>,
    /// Record measured wall time in log.csv (breaks byte-reproducibility)
    #[arg(long = "wall-clock-log")]
    wall_clock_log: bool,
    /// Sample rate of the generated audio fixture
    #[arg(long = "sample-rate")]
    sample_rate: Option<u32>,
}

impl CommonArgs {
    fn to_partial(&self) -> PartialConfig {
        PartialConfig {
            model: self.model,
            input: self.input.clone(),
            out: self.out.clone(),
            epochs: self.epochs,
            lr: self.lr,
            alpha: self.alpha,
            omega0_first: self.omega0_first,
            omega0_hidden: self.omega0_hidden,
            width: self.width,
            depth: self.depth,
            seed: self.seed,
            chunk: self.chunk,
            lambda: self.lambda,
            harmonizer: self.harmonizer,
            freeze_params: self.freeze_params,
            tau: self.tau,
            ro: self.ro,
            factor: self.factor,
            mask_fraction: self.mask_fraction,
            angles: self.angles,
            detector_noise: self.detector_noise,
            cutoff: self.cutoff,
            sweep_axis: self.sweep_axis,
            wall_clock_log: if self.wall_clock_log {
                Some(true)
            } else {
                None
            },
            sample_rate: self.sample_rate,
        }
    }
}

fn main() -> ExitCode {
    init_threads_from_env();
    let cli = Cli::parse();
    let (task, args) = match &cli.command {
        Command::FitImage(a) => (Task::FitImage, a),
        Command::FitAudio(a) => (Task::FitAudio, a),
        Command::FitOccupancy(a) => (Task::FitOccupancy, a),
        Command::Denoise(a) => (Task::Denoise, a),
        Command::Superres(a) => (Task::Superres, a),
        Command::Inpaint(a) => (Task::Inpaint, a),
        Command::CtRecon(a) => (Task::CtRecon, a),
        Command::Spectrum(a) => (Task::Spectrum, a),
        Command::Sweep(a) => (Task::Sweep, a),
    };

    let mut cfg = RunConfig::defaults_for(task);
    if let Some(path) = &args.config {
        match load_config_file(path) {
            Ok(part) => cfg.apply(&part),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code_for(&e) as u8);
            }
        }
    }
    cfg.apply(&args.to_partial());

    match run(&cfg) {
        Ok(report) => {
            for (key, value) in &report.metrics {
                println!("{key}: {value}");
            }
            if report.diverged {
                eprintln!("training diverged; last finite checkpoint written");
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
