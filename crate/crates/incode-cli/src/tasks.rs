//! The individual task pipelines.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use incode_core::checkpoint::save_checkpoint;
use incode_core::conditioning::{
    ConvSignalExtractor, HarmonizerNetwork, LatentExtractor, MfccConfig, DEFAULT_CONV_CHANNELS,
};
use incode_core::ct::{
    add_detector_noise, ct_fit, radon, save_sinogram_csv, uniform_angles, CtProblem,
};
use incode_core::nn::{ActivationParams, ComposerNetwork};
use incode_core::signals::{
    add_sensor_noise, downsample, fixtures, load_png, load_volume, load_wav, make_grid, psnr,
    random_mask, save_mask_png, save_png, save_volume, save_wav, ssim_image, AudioSignal,
    ImageSignal, OccupancyVolume,
};
use incode_core::training::{epoch_log_csv, fit, Conditioning, EpochLog, FitDataset, ModelBundle};
use incode_core::{Mat, Result};

use crate::config::{ModelKind, RunConfig};
use crate::{metric_value, write_metrics, RunReport};

// Component-tagged sub-seeds keep initialization streams independent, so the
// baseline switch leaves the composer initialization untouched.
const TAG_COMPOSER: u64 = 0x636f_6d70;
const TAG_HARMONIZER: u64 = 0x6861_726d;
const TAG_EXTRACTOR: u64 = 0x6578_7472;
const TAG_NOISE: u64 = 0x6e6f_6973;
const TAG_MASK: u64 = 0x6d61_736b;

pub(crate) fn component_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tag)
}

/// Builds the model for a task. In learned mode the extractor comes from
/// `mk_extractor`; frozen modes never invoke it.
pub(crate) fn build_bundle(
    cfg: &RunConfig,
    input_dim: usize,
    output_dim: usize,
    mk_extractor: impl FnOnce(&mut ChaCha8Rng) -> Result<LatentExtractor>,
) -> Result<ModelBundle> {
    let mut composer_rng = component_rng(cfg.seed, TAG_COMPOSER);
    let composer = ComposerNetwork::new(
        input_dim,
        output_dim,
        cfg.depth,
        cfg.width,
        cfg.omega0_first,
        cfg.omega0_hidden,
        &mut composer_rng,
    )?;
    let conditioning = match (cfg.model, cfg.freeze_params) {
        (ModelKind::Siren, _) => Conditioning::Frozen(ActivationParams::identity()),
        (ModelKind::Incode, Some([a, b, c, d])) => {
            Conditioning::Frozen(ActivationParams::from_effective(a, b, c, d)?)
        }
        (ModelKind::Incode, None) => {
            let mut ex_rng = component_rng(cfg.seed, TAG_EXTRACTOR);
            let extractor = mk_extractor(&mut ex_rng)?;
            let mut harmonizer =
                HarmonizerNetwork::from_profile(extractor.output_dim(), cfg.harmonizer)?;
            let mut h_rng = component_rng(cfg.seed, TAG_HARMONIZER);
            harmonizer.init(cfg.harmonizer.default_bias(), &mut h_rng);
            Conditioning::Learned {
                harmonizer,
                extractor,
            }
        }
    };
    ModelBundle::new(composer, conditioning)
}

fn conv_extractor(rng: &mut ChaCha8Rng) -> Result<LatentExtractor> {
    Ok(LatentExtractor::ConvSignal(ConvSignalExtractor::new(
        DEFAULT_CONV_CHANNELS,
        rng,
    )))
}

struct FitArtifacts<'a> {
    cfg: &'a RunConfig,
    bundle: &'a ModelBundle,
    conditioning_input: Option<&'a [f64]>,
    logs: &'a [EpochLog],
}

/// Common outputs every training run writes: checkpoint (+sidecar), CSV log.
fn write_run_artifacts(art: &FitArtifacts) -> Result<[f64; 4]> {
    let raw = art.bundle.activation_params(art.conditioning_input)?.raw();
    save_checkpoint(&art.cfg.out.join("checkpoint.bin"), art.bundle, raw)?;
    std::fs::write(
        art.cfg.out.join("log.csv"),
        epoch_log_csv(art.logs, art.cfg.wall_clock_log),
    )?;
    Ok(raw)
}

fn last_psnr(logs: &[EpochLog]) -> f64 {
    logs.last().map_or(f64::NAN, |l| l.psnr)
}

fn clamped(img: &ImageSignal) -> ImageSignal {
    let mut out = img.clone();
    out.clamp01();
    out
}

pub(crate) fn load_image_or_fixture(cfg: &RunConfig, h: usize, w: usize) -> Result<ImageSignal> {
    match &cfg.input {
        Some(p) => load_png(p),
        None => Ok(fixtures::test_image(h, w, 3)),
    }
}

/// Core image fitting shared by `fit-image` and the sweep cells.
pub(crate) struct ImageFitOutcome {
    pub logs: Vec<EpochLog>,
    pub diverged: bool,
    pub bundle: ModelBundle,
    pub recon: ImageSignal,
}

pub(crate) fn fit_image_core(cfg: &RunConfig, img: &ImageSignal) -> Result<ImageFitOutcome> {
    let grid = make_grid(&[img.height, img.width])?;
    let targets = img.to_targets();
    let mut bundle = build_bundle(cfg, 2, img.channels, conv_extractor)?;
    let mut ds = FitDataset::new(grid.coords(), &targets);
    ds.conditioning_input = Some(&img.data);
    let report = fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    let params = bundle.activation_params(Some(&img.data))?;
    let out = bundle.composer.eval_chunked(grid.coords(), &params, 256)?;
    let recon = ImageSignal::from_targets(img.height, img.width, &out)?;
    Ok(ImageFitOutcome {
        logs: report.logs,
        diverged: report.diverged.is_some(),
        bundle,
        recon,
    })
}

pub(crate) fn fit_image(cfg: &RunConfig) -> Result<RunReport> {
    let img = load_image_or_fixture(cfg, 64, 64)?;
    let outcome = fit_image_core(cfg, &img)?;
    let recon = clamped(&outcome.recon);
    save_png(&recon, &cfg.out.join("recon.png"))?;
    let raw_art = FitArtifacts {
        cfg,
        bundle: &outcome.bundle,
        conditioning_input: Some(&img.data),
        logs: &outcome.logs,
    };
    write_run_artifacts(&raw_art)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&outcome.logs)));
    metrics.insert("ssim".into(), metric_value(ssim_image(&recon, &img)?));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: outcome.diverged,
    })
}

pub(crate) fn fit_audio(cfg: &RunConfig) -> Result<RunReport> {
    let audio = match &cfg.input {
        Some(p) => load_wav(p)?,
        None => AudioSignal::new(
            cfg.sample_rate,
            fixtures::test_audio(cfg.sample_rate as usize, cfg.sample_rate),
        )?,
    };
    let n = audio.samples.len();
    let grid = make_grid(&[n])?;
    let targets = Mat::from_vec(1, n, audio.samples.clone());
    let sample_rate = audio.sample_rate;
    let mut bundle = build_bundle(cfg, 1, 1, move |_| {
        Ok(LatentExtractor::Mfcc {
            config: MfccConfig::default(),
            sample_rate,
            output_dim: 64,
        })
    })?;
    let mut ds = FitDataset::new(grid.coords(), &targets);
    ds.conditioning_input = Some(&audio.samples);
    let report = fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    let params = bundle.activation_params(Some(&audio.samples))?;
    let out = bundle.composer.eval_chunked(grid.coords(), &params, 256)?;
    let recon_samples: Vec<f64> = out.row(0).iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    save_wav(
        &AudioSignal::new(audio.sample_rate, recon_samples)?,
        &cfg.out.join("recon.wav"),
    )?;
    write_run_artifacts(&FitArtifacts {
        cfg,
        bundle: &bundle,
        conditioning_input: Some(&audio.samples),
        logs: &report.logs,
    })?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&report.logs)));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: report.diverged.is_some(),
    })
}

pub(crate) fn fit_occupancy(cfg: &RunConfig) -> Result<RunReport> {
    let vol = match &cfg.input {
        Some(p) => load_volume(p)?,
        None => fixtures::sphere_volume(32, 0.6),
    };
    let grid = make_grid(&[vol.nx, vol.ny, vol.nz])?;
    let targets = vol.to_targets();
    let mut bundle = build_bundle(cfg, 3, 1, conv_extractor)?;
    let mut ds = FitDataset::new(grid.coords(), &targets);
    ds.conditioning_input = Some(&vol.data);
    let report = fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    let params = bundle.activation_params(Some(&vol.data))?;
    let out = bundle.composer.eval_chunked(grid.coords(), &params, 256)?;
    let recon = OccupancyVolume::from_targets(vol.nx, vol.ny, vol.nz, &out)?;
    save_volume(&recon, &cfg.out.join("recon.raw"))?;
    write_run_artifacts(&FitArtifacts {
        cfg,
        bundle: &bundle,
        conditioning_input: Some(&vol.data),
        logs: &report.logs,
    })?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&report.logs)));
    metrics.insert(
        "iou".into(),
        metric_value(incode_core::signals::iou(&recon, &vol, 0.5)?),
    );
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: report.diverged.is_some(),
    })
}

pub(crate) fn denoise(cfg: &RunConfig) -> Result<RunReport> {
    let clean = load_image_or_fixture(cfg, 64, 64)?;
    let mut noise_rng = component_rng(cfg.seed, TAG_NOISE);
    let noisy = add_sensor_noise(&clean, cfg.tau, cfg.ro, &mut noise_rng)?;
    save_png(&clamped(&noisy), &cfg.out.join("noisy.png"))?;
    let grid = make_grid(&[clean.height, clean.width])?;
    let targets = noisy.to_targets();
    let metric_targets = clean.to_targets();
    let mut bundle = build_bundle(cfg, 2, clean.channels, conv_extractor)?;
    let mut ds = FitDataset::new(grid.coords(), &targets);
    ds.conditioning_input = Some(&noisy.data);
    ds.metric_targets = Some(&metric_targets);
    let report = fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    let params = bundle.activation_params(Some(&noisy.data))?;
    let out = bundle.composer.eval_chunked(grid.coords(), &params, 256)?;
    let recon = clamped(&ImageSignal::from_targets(clean.height, clean.width, &out)?);
    save_png(&recon, &cfg.out.join("recon.png"))?;
    write_run_artifacts(&FitArtifacts {
        cfg,
        bundle: &bundle,
        conditioning_input: Some(&noisy.data),
        logs: &report.logs,
    })?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&report.logs)));
    metrics.insert("ssim".into(), metric_value(ssim_image(&recon, &clean)?));
    metrics.insert(
        "psnr_noisy".into(),
        metric_value(psnr(&noisy.data, &clean.data, 1.0)?),
    );
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: report.diverged.is_some(),
    })
}

pub(crate) fn superres(cfg: &RunConfig) -> Result<RunReport> {
    let full = load_image_or_fixture(cfg, 128, 128)?;
    let small = downsample(&full, cfg.factor);
    let grid_small = make_grid(&[small.height, small.width])?;
    let targets = small.to_targets();
    let mut bundle = build_bundle(cfg, 2, full.channels, conv_extractor)?;
    let mut ds = FitDataset::new(grid_small.coords(), &targets);
    ds.conditioning_input = Some(&small.data);
    let report = fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    let params = bundle.activation_params(Some(&small.data))?;
    // Evaluate on the full-resolution grid: the representation interpolates.
    let grid_full = make_grid(&[full.height, full.width])?;
    let out = bundle
        .composer
        .eval_chunked(grid_full.coords(), &params, 256)?;
    let recon = clamped(&ImageSignal::from_targets(full.height, full.width, &out)?);
    save_png(&recon, &cfg.out.join("recon.png"))?;
    write_run_artifacts(&FitArtifacts {
        cfg,
        bundle: &bundle,
        conditioning_input: Some(&small.data),
        logs: &report.logs,
    })?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&report.logs)));
    metrics.insert(
        "psnr_eval".into(),
        metric_value(psnr(&recon.data, &full.data, 1.0)?),
    );
    metrics.insert("ssim_eval".into(), metric_value(ssim_image(&recon, &full)?));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: report.diverged.is_some(),
    })
}

pub(crate) fn inpaint(cfg: &RunConfig) -> Result<RunReport> {
    let img = load_image_or_fixture(cfg, 64, 64)?;
    let mut mask_rng = component_rng(cfg.seed, TAG_MASK);
    let mask = random_mask(&[img.height, img.width], cfg.mask_fraction, &mut mask_rng)?;
    save_mask_png(&mask, &cfg.out.join("mask.png"))?;
    let mut observed = img.clone();
    for (p, &keep) in mask.data.iter().enumerate() {
        if !keep {
            for c in 0..img.channels {
                observed.data[p * img.channels + c] = 0.0;
            }
        }
    }
    save_png(&observed, &cfg.out.join("observed.png"))?;
    // Latent input: only the sampled pixels, raster order.
    let mut sampled = Vec::new();
    for (p, &keep) in mask.data.iter().enumerate() {
        if keep {
            sampled.extend_from_slice(&img.data[p * img.channels..(p + 1) * img.channels]);
        }
    }
    let grid = make_grid(&[img.height, img.width])?;
    let targets = img.to_targets();
    let mut bundle = build_bundle(cfg, 2, img.channels, conv_extractor)?;
    let mut ds = FitDataset::new(grid.coords(), &targets);
    ds.mask = Some(&mask.data);
    ds.conditioning_input = Some(&sampled);
    let report = fit(&mut bundle, &ds, &cfg.train_config(), &cfg.loss_config())?;
    let params = bundle.activation_params(Some(&sampled))?;
    let out = bundle.composer.eval_chunked(grid.coords(), &params, 256)?;
    let recon = clamped(&ImageSignal::from_targets(img.height, img.width, &out)?);
    save_png(&recon, &cfg.out.join("recon.png"))?;
    write_run_artifacts(&FitArtifacts {
        cfg,
        bundle: &bundle,
        conditioning_input: Some(&sampled),
        logs: &report.logs,
    })?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&report.logs)));
    metrics.insert(
        "psnr_full".into(),
        metric_value(psnr(&recon.data, &img.data, 1.0)?),
    );
    metrics.insert("ssim_full".into(), metric_value(ssim_image(&recon, &img)?));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: report.diverged.is_some(),
    })
}

pub(crate) fn ct_recon(cfg: &RunConfig) -> Result<RunReport> {
    let gt = match &cfg.input {
        Some(p) => pad_to_square(&load_png(p)?.to_gray()),
        None => fixtures::ellipse_phantom(64),
    };
    let n = gt.height;
    let angles = uniform_angles(cfg.angles);
    let mut measured = radon(&gt, &angles)?;
    if cfg.detector_noise > 0.0 {
        let mut rng = component_rng(cfg.seed, TAG_NOISE);
        measured = add_detector_noise(&measured, cfg.detector_noise, &mut rng);
    }
    save_sinogram_csv(&measured, &cfg.out.join("sinogram.csv"))?;
    let mut bundle = build_bundle(cfg, 2, 1, conv_extractor)?;
    let problem = CtProblem {
        measured,
        image_size: n,
    };
    let result = ct_fit(
        &problem,
        &mut bundle,
        &cfg.train_config(),
        &cfg.loss_config(),
        Some(&gt),
    )?;
    let recon = clamped(&result.reconstruction);
    save_png(&recon, &cfg.out.join("recon.png"))?;
    write_run_artifacts(&FitArtifacts {
        cfg,
        bundle: &bundle,
        conditioning_input: Some(problem.measured.flattened()),
        logs: &result.report.logs,
    })?;
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr".into(), metric_value(last_psnr(&result.report.logs)));
    metrics.insert("ssim".into(), metric_value(ssim_image(&recon, &gt)?));
    write_metrics(&cfg.out, &metrics)?;
    Ok(RunReport {
        metrics,
        diverged: result.report.diverged.is_some(),
    })
}

fn pad_to_square(img: &ImageSignal) -> ImageSignal {
    if img.height == img.width {
        return img.clone();
    }
    let n = img.height.max(img.width);
    let mut out = ImageSignal::new(n, n, 1);
    let oy = (n - img.height) / 2;
    let ox = (n - img.width) / 2;
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(y + oy, x + ox, 0, img.get(y, x, 0));
        }
    }
    out
}
