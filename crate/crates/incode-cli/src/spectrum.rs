//! Frequency-bandwidth comparison on a chirp: train the conditioned model
//! and the plain-sine baseline with equal budgets, then compare amplitude
//! spectra of the first hidden layer's responses over the sweep.

use std::collections::BTreeMap;

use rustfft::{num_complex::Complex, FftPlanner};

use incode_core::signals::{fixtures, make_grid};
use incode_core::training::{fit, FitDataset, ModelBundle};
use incode_core::{Mat, Result};

use crate::config::{ModelKind, RunConfig};
use crate::tasks::build_bundle;
use crate::{metric_value, write_metrics, RunReport};

const CHIRP_LEN: usize = 1024;
const CHIRP_F0: f64 = 2.0;
const CHIRP_F1: f64 = 128.0;

pub struct SpectrumReport {
    /// Mean first-layer amplitude per DFT bin, one spectrum per model.
    pub incode: Vec<f64>,
    pub siren: Vec<f64>,
    pub incode_energy_fraction: f64,
    pub siren_energy_fraction: f64,
    pub cutoff_bin: usize,
}

fn train_on_chirp(cfg: &RunConfig, model: ModelKind, signal: &[f64]) -> Result<ModelBundle> {
    let mut model_cfg = cfg.clone();
    model_cfg.model = model;
    let grid = make_grid(&[signal.len()])?;
    let targets = Mat::from_vec(1, signal.len(), signal.to_vec());
    let mut bundle = build_bundle(&model_cfg, 1, 1, |rng| {
        Ok(incode_core::conditioning::LatentExtractor::ConvSignal(
            incode_core::conditioning::ConvSignalExtractor::new(
                incode_core::conditioning::DEFAULT_CONV_CHANNELS,
                rng,
            ),
        ))
    })?;
    let mut ds = FitDataset::new(grid.coords(), &targets);
    ds.conditioning_input = Some(signal);
    fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    Ok(bundle)
}

/// Mean DFT magnitude of each first-hidden-layer unit's response over the
/// grid, averaged across units. Length is `n/2 + 1` bins.
fn first_layer_spectrum(
    bundle: &ModelBundle,
    signal_len: usize,
    input: &[f64],
) -> Result<Vec<f64>> {
    let grid = make_grid(&[signal_len])?;
    let params = bundle.activation_params(Some(input))?;
    let trace = bundle.composer.forward(grid.coords(), &params)?;
    let responses = &trace.hidden_outputs[0];
    let n = signal_len;
    let n_bins = n / 2 + 1;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut avg = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for unit in 0..responses.rows() {
        let row = responses.row(unit);
        let mean = row.iter().sum::<f64>() / n as f64;
        for (c, &v) in buf.iter_mut().zip(row) {
            *c = Complex::new(v - mean, 0.0);
        }
        fft.process(&mut buf);
        for (dst, c) in avg.iter_mut().zip(&buf[..n_bins]) {
            *dst += c.norm();
        }
    }
    let inv = 1.0 / responses.rows() as f64;
    for v in &mut avg {
        *v *= inv;
    }
    Ok(avg)
}

fn energy_above(spectrum: &[f64], cutoff_bin: usize) -> f64 {
    let total: f64 = spectrum.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let high: f64 = spectrum[cutoff_bin..].iter().map(|v| v * v).sum();
    high / total
}

/// Trains both models on the chirp and builds the comparison report.
pub fn spectrum_report(cfg: &RunConfig) -> Result<SpectrumReport> {
    let signal = fixtures::chirp(CHIRP_LEN, CHIRP_F0, CHIRP_F1);
    let incode_bundle = train_on_chirp(cfg, ModelKind::Incode, &signal)?;
    let siren_bundle = train_on_chirp(cfg, ModelKind::Siren, &signal)?;
    let incode = first_layer_spectrum(&incode_bundle, CHIRP_LEN, &signal)?;
    let siren = first_layer_spectrum(&siren_bundle, CHIRP_LEN, &signal)?;
    let cutoff_bin = ((CHIRP_LEN / 2) as f64 * cfg.cutoff).round().max(1.0) as usize;
    let incode_energy_fraction = energy_above(&incode, cutoff_bin);
    let siren_energy_fraction = energy_above(&siren, cutoff_bin);
    Ok(SpectrumReport {
        incode,
        siren,
        incode_energy_fraction,
        siren_energy_fraction,
        cutoff_bin,
    })
}

pub(crate) fn run_spectrum(cfg: &RunConfig) -> Result<RunReport> {
    let report = spectrum_report(cfg)?;
    let mut csv = String::from("bin,incode_amplitude,siren_amplitude\n");
    for (bin, (a, b)) in report.incode.iter().zip(&report.siren).enumerate() {
        csv.push_str(&format!("{bin},{a},{b}\n"));
    }
    std::fs::write(cfg.out.join("spectrum.csv"), csv)?;
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "incode_energy_fraction".into(),
        metric_value(report.incode_energy_fraction),
    );
    metrics.insert(
        "siren_energy_fraction".into(),
        metric_value(report.siren_energy_fraction),
    );
    metrics.insert("cutoff_bin".into(), serde_json::json!(report.cutoff_bin));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: false,
    })
}
