//! Run configuration: task-specific defaults, JSON config files, and the
//! flag overlay. Precedence is defaults < config file < flags.

use std::path::PathBuf;

use incode_core::conditioning::HarmonizerProfile;
use incode_core::training::{LossConfig, TrainConfig};
use incode_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FitImage,
    FitAudio,
    FitOccupancy,
    Denoise,
    Superres,
    Inpaint,
    CtRecon,
    Spectrum,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Incode,
    Siren,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Depth,
    Width,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelKind,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub omega0_first: f64,
    pub omega0_hidden: f64,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub chunk: usize,
    pub lambda: [f64; 4],
    pub harmonizer: HarmonizerProfile,
    /// Pin the effective activation quadruple, bypassing the conditioning
    /// path entirely.
    pub freeze_params: Option<[f64; 4]>,
    pub tau: f64,
    pub ro: f64,
    pub factor: usize,
    pub mask_fraction: f64,
    pub angles: usize,
    /// Gaussian detector noise std for synthetic sinograms (0 = noiseless).
    pub detector_noise: f64,
    /// Spectrum-report energy cutoff as a fraction of Nyquist.
    pub cutoff: f64,
    pub sweep_axis: SweepAxis,
    /// Record measured wall time in the CSV log instead of zeros. Off by
    /// default so identical runs produce byte-identical logs.
    pub wall_clock_log: bool,
    /// Sample rate for the generated audio fixture.
    pub sample_rate: u32,
}

impl RunConfig {
    /// Task-specific default settings.
    pub fn defaults_for(task: Task) -> Self {
        let mut cfg = RunConfig {
            task,
            model: ModelKind::Incode,
            input: None,
            out: PathBuf::from("out"),
            epochs: 500,
            lr: 9e-4,
            alpha: 0.1,
            omega0_first: 30.0,
            omega0_hidden: 30.0,
            width: 256,
            depth: 5,
            seed: 0,
            chunk: 65_536,
            lambda: LossConfig::default().lambda,
            harmonizer: HarmonizerProfile::Image,
            freeze_params: None,
            tau: 40.0,
            ro: 2.0,
            factor: 2,
            mask_fraction: 0.2,
            angles: 150,
            detector_noise: 0.0,
            cutoff: 0.02,
            sweep_axis: SweepAxis::Depth,
            wall_clock_log: false,
            sample_rate: 8000,
        };
        match task {
            Task::FitImage | Task::Superres | Task::Sweep | Task::Spectrum => {}
            Task::FitAudio => {
                cfg.epochs = 1000;
                cfg.lr = 9e-5;
                cfg.alpha = 0.2;
                cfg.omega0_first = 3000.0;
            }
            Task::FitOccupancy => {
                cfg.epochs = 200;
            }
            Task::Denoise => {
                cfg.lr = 1.5e-4;
                cfg.omega0_first = 10.0;
                cfg.harmonizer = HarmonizerProfile::Denoise;
            }
            Task::Inpaint => {
                cfg.lr = 1.5e-4;
                cfg.alpha = 0.25;
            }
            Task::CtRecon => {
                cfg.epochs = 2000;
                cfg.lr = 2e-4;
                cfg.alpha = 0.4;
            }
        }
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr0: self.lr,
            alpha: self.alpha,
            seed: self.seed,
            chunk: self.chunk,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(Error::Config("width and depth must be >= 1".into()));
        }
        if !(self.omega0_first > 0.0 && self.omega0_hidden > 0.0) {
            return Err(Error::Config("omega0 values must be > 0".into()));
        }
        if self.factor == 0 {
            return Err(Error::Config("factor must be >= 1".into()));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::Config("mask fraction must lie in (0, 1]".into()));
        }
        if self.angles == 0 {
            return Err(Error::Config("need at least one projection angle".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::Config("cutoff must lie in (0, 1)".into()));
        }
        if let Some([a, b, _, _]) = self.freeze_params {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Config(
                    "frozen amplitude and frequency scale must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sparse overlay with flat keys mirroring the CLI flags; unknown keys are
/// rejected so stale config files fail loudly.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub model: Option<ModelKind>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub alpha: Option<f64>,
    pub omega0_first: Option<f64>,
    pub omega0_hidden: Option<f64>,
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub seed: Option<u64>,
    pub chunk: Option<usize>,
    pub lambda: Option<[f64; 4]>,
    pub harmonizer: Option<HarmonizerProfile>,
    pub freeze_params: Option<[f64; 4]>,
    pub tau: Option<f64>,
    pub ro: Option<f64>,
    pub factor: Option<usize>,
    pub mask_fraction: Option<f64>,
    pub angles: Option<usize>,
    pub detector_noise: Option<f64>,
    pub cutoff: Option<f64>,
    pub sweep_axis: Option<SweepAxis>,
    pub wall_clock_log: Option<bool>,
    pub sample_rate: Option<u32>,
}

macro_rules! overlay {
    ($cfg:ident, $part:ident, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $part.$field.clone() { $cfg.$field = v; })+
    };
}

impl RunConfig {
    pub fn apply(&mut self, part: &PartialConfig) {
        overlay!(
            self,
            part,
            model,
            out,
            epochs,
            lr,
            alpha,
            omega0_first,
            omega0_hidden,
            width,
            depth,
            seed,
            chunk,
            lambda,
            harmonizer,
            tau,
            ro,
            factor,
            mask_fraction,
            angles,
            detector_noise,
            cutoff,
            sweep_axis,
            wall_clock_log,
            sample_rate,
        );
        if part.input.is_some() {
            self.input = part.input.clone();
        }
        if part.freeze_params.is_some() {
            self.freeze_params = part.freeze_params;
        }
    }
}

pub fn load_config_file(path: &std::path::Path) -> Result<PartialConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("config file: {e}")))
}
