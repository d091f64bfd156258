//! Task pipelines tying the networks, training loop, signal handling and
//! projection operators into runnable experiments.

pub mod config;
mod spectrum;
mod sweep;
mod tasks;

use std::collections::BTreeMap;
use std::path::Path;

use incode_core::{Error, Result};

pub use config::{ModelKind, PartialConfig, RunConfig, SweepAxis, Task};
pub use spectrum::{spectrum_report, SpectrumReport};

/// Outcome of one run: the metrics that went into `metrics.json` and
/// whether training aborted on a non-finite loss.
#[derive(Debug)]
pub struct RunReport {
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub diverged: bool,
}

/// Executes one task end to end, writing artifacts into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    match cfg.task {
        Task::FitImage => tasks::fit_image(cfg),
        Task::FitAudio => tasks::fit_audio(cfg),
        Task::FitOccupancy => tasks::fit_occupancy(cfg),
        Task::Denoise => tasks::denoise(cfg),
        Task::Superres => tasks::superres(cfg),
        Task::Inpaint => tasks::inpaint(cfg),
        Task::CtRecon => tasks::ct_recon(cfg),
        Task::Spectrum => spectrum::run_spectrum(cfg),
        Task::Sweep => sweep::run_sweep(cfg),
    }
}

/// Process exit code for an error: 2 config, 3 IO/format, 4 divergence.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Shape { .. } | Error::TraceMismatch(_) => 2,
        Error::Io(_) | Error::Format(_) => 3,
        Error::Divergence { .. } | Error::NonFinite(_) => 4,
    }
}

/// Caps the global thread pool from `INCODE_THREADS` when set. Call once at
/// startup; later calls are no-ops.
pub fn init_threads_from_env() {
    if let Ok(v) = std::env::var("INCODE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

pub(crate) fn metric_value(v: f64) -> serde_json::Value {
    if v.is_infinite() && v > 0.0 {
        serde_json::Value::String("inf".into())
    } else if v.is_nan() {
        serde_json::Value::String("nan".into())
    } else {
        serde_json::json!(v)
    }
}

pub(crate) fn write_metrics(
    out: &Path,
    metrics: &BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let text = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    std::fs::write(out.join("metrics.json"), text)?;
    Ok(())
}
