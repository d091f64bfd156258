//! The full-batch fitting loop: conditioning forward, chunked composer
//! forward/backward, penalty, Adam update, learning-rate decay, logging.

use std::time::Instant;

use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::bundle::{flatten_grads, Conditioning, ModelBundle};
use super::loss::{constraint_penalty, LossConfig};
use super::schedule::{lr_at, TrainConfig};
use crate::mat::Mat;
use crate::nn::ComposerGradients;
use crate::signals::psnr_from_mse;
use crate::{Error, Result};

/// Hard cap on points per parallel tile; keeps per-thread traces small while
/// the configured chunk size bounds them from above.
const MAX_TILE: usize = 256;

/// One training problem: coordinates, targets, and optional extras.
///
/// `mask`, when present, selects the supervised subset; unmasked points are
/// excluded from the loss entirely. `conditioning_input` is the flattened
/// signal handed to the latent extractor (required in learned mode).
/// `metric_targets` substitutes the reference used for the logged PSNR,
/// e.g. the clean image while fitting a noisy target.
pub struct FitDataset<'a> {
    pub coords: &'a Mat,
    pub targets: &'a Mat,
    pub mask: Option<&'a [bool]>,
    pub conditioning_input: Option<&'a [f64]>,
    pub metric_targets: Option<&'a Mat>,
    pub metric_max: f64,
}

impl<'a> FitDataset<'a> {
    pub fn new(coords: &'a Mat, targets: &'a Mat) -> Self {
        FitDataset {
            coords,
            targets,
            mask: None,
            conditioning_input: None,
            metric_targets: None,
            metric_max: 1.0,
        }
    }
}

/// One row per epoch. `seconds` is measured wall time for the epoch.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub penalty: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub psnr: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct FitReport {
    pub logs: Vec<EpochLog>,
    /// Epoch at which the loss went non-finite; the bundle is rolled back to
    /// the last finite state when this is set.
    pub diverged: Option<usize>,
}

pub fn fit(
    bundle: &mut ModelBundle,
    dataset: &FitDataset,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<FitReport> {
    let total_points = dataset.coords.cols();
    if total_points == 0 {
        return Err(Error::Config("dataset is empty".into()));
    }
    if dataset.targets.cols() != total_points
        || dataset.targets.rows() != bundle.composer.output_dim()
        || dataset.coords.rows() != bundle.composer.input_dim()
    {
        return Err(Error::shape(
            "fit dataset",
            format!(
                "coords {}xP, targets {}xP",
                bundle.composer.input_dim(),
                bundle.composer.output_dim()
            ),
            format!(
                "coords {}x{}, targets {}x{}",
                dataset.coords.rows(),
                dataset.coords.cols(),
                dataset.targets.rows(),
                dataset.targets.cols()
            ),
        ));
    }
    if !(train_cfg.alpha > 0.0 && train_cfg.alpha <= 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1], got {}",
            train_cfg.alpha
        )));
    }
    if let Some(mask) = dataset.mask {
        if mask.len() != total_points {
            return Err(Error::shape("mask", total_points, mask.len()));
        }
    }
    if let Some(mt) = dataset.metric_targets {
        if mt.rows() != dataset.targets.rows() || mt.cols() != total_points {
            return Err(Error::shape(
                "metric targets",
                format!("{}x{}", dataset.targets.rows(), total_points),
                format!("{}x{}", mt.rows(), mt.cols()),
            ));
        }
    }

    // Select the supervised subset once.
    let selected: Vec<usize> = match dataset.mask {
        Some(mask) => (0..total_points).filter(|&i| mask[i]).collect(),
        None => (0..total_points).collect(),
    };
    if selected.is_empty() {
        return Err(Error::Config("mask selects no points".into()));
    }
    let pick = |src: &Mat| -> Mat {
        let mut out = Mat::zeros(src.rows(), selected.len());
        for r in 0..src.rows() {
            let row = src.row(r);
            let dst = out.row_mut(r);
            for (j, &i) in selected.iter().enumerate() {
                dst[j] = row[i];
            }
        }
        out
    };
    let sup_coords = pick(dataset.coords);
    let sup_targets = pick(dataset.targets);
    let sup_metric = dataset.metric_targets.map(pick);

    // Latent codes from fixed extractors never change; compute them once.
    let cached_latent: Option<Vec<f64>> = match &bundle.conditioning {
        Conditioning::Learned { extractor, .. } if !extractor.is_trainable() => {
            let input = dataset.conditioning_input.ok_or_else(|| {
                Error::Config("learned conditioning requires a conditioning input".into())
            })?;
            Some(extractor.extract(input)?)
        }
        Conditioning::Learned { .. } => {
            if dataset.conditioning_input.is_none() {
                return Err(Error::Config(
                    "learned conditioning requires a conditioning input".into(),
                ));
            }
            None
        }
        Conditioning::Frozen(_) => None,
    };

    let layout = bundle.param_layout();
    let mut flat = bundle.flatten_params();
    let mut adam = AdamState::new(flat.len());

    let n_out = bundle.composer.output_dim();
    let count = (selected.len() * n_out) as f64;
    let tile = train_cfg.chunk.max(1).min(MAX_TILE);
    let bounds: Vec<(usize, usize)> = (0..selected.len())
        .step_by(tile)
        .map(|lo| (lo, (lo + tile).min(selected.len())))
        .collect();

    let mut logs = Vec::with_capacity(train_cfg.epochs);
    let mut prev_flat = flat.clone();

    for epoch in 0..train_cfg.epochs {
        let started = Instant::now();

        let conditioning =
            bundle.conditioning_forward(dataset.conditioning_input, cached_latent.as_deref())?;
        let params = conditioning.params;
        let eff = params.effective();
        let (penalty, penalty_eff_grads) = constraint_penalty(&eff, loss_cfg);

        // Forward/backward over tiles; reduction order is fixed by tile index.
        let composer = &bundle.composer;
        let tiles: Vec<(f64, f64, ComposerGradients)> = bounds
            .par_iter()
            .map(|&(lo, hi)| -> Result<(f64, f64, ComposerGradients)> {
                let coords_tile = sup_coords.col_range(lo, hi);
                let trace = composer.forward(&coords_tile, &params)?;
                let width = hi - lo;
                let mut grad = Mat::zeros(n_out, width);
                let mut sq = 0.0;
                let mut metric_sq = 0.0;
                for r in 0..n_out {
                    let pred = trace.output.row(r);
                    let tgt = &sup_targets.row(r)[lo..hi];
                    let g = grad.row_mut(r);
                    for j in 0..width {
                        let res = pred[j] - tgt[j];
                        sq += res * res;
                        g[j] = 2.0 * res / count;
                    }
                    if let Some(metric) = &sup_metric {
                        let m = &metric.row(r)[lo..hi];
                        for j in 0..width {
                            let res = pred[j] - m[j];
                            metric_sq += res * res;
                        }
                    }
                }
                let grads = composer.backward(&trace, &params, &grad, false)?;
                Ok((sq, metric_sq, grads))
            })
            .collect::<Result<_>>()?;

        let mut composer_grads = ComposerGradients::zeros_like(composer);
        let mut sq_total = 0.0;
        let mut metric_sq_total = 0.0;
        for (sq, msq, grads) in &tiles {
            sq_total += sq;
            metric_sq_total += msq;
            composer_grads.add_assign(grads);
        }
        drop(tiles);

        let data_loss = sq_total / count;
        let metric_mse = if sup_metric.is_some() {
            metric_sq_total / count
        } else {
            data_loss
        };
        let loss = data_loss + penalty;

        if !loss.is_finite() {
            bundle.scatter_params(&prev_flat);
            return Ok(FitReport {
                logs,
                diverged: Some(epoch),
            });
        }

        // Total raw-parameter gradient: data term plus penalty term, both
        // through the exp transform.
        let jac = params.raw_jacobian();
        let mut raw_grads = composer_grads.raw_params;
        for i in 0..4 {
            raw_grads[i] += penalty_eff_grads[i] * jac[i];
        }

        let (harm_grads, conv_grads) = bundle.conditioning_backward(&conditioning, raw_grads)?;

        let grad_flat = flatten_grads(&composer_grads, harm_grads.as_ref(), conv_grads.as_ref());
        debug_assert_eq!(grad_flat.len(), flat.len());

        prev_flat.copy_from_slice(&flat);
        let lr = lr_at(epoch, train_cfg);
        adam_step(&mut adam, &mut flat, &grad_flat, lr, &layout)?;
        bundle.scatter_params(&flat);

        logs.push(EpochLog {
            epoch,
            loss: data_loss,
            penalty,
            a: eff.a,
            b: eff.b,
            c: eff.c,
            d: eff.d,
            psnr: psnr_from_mse(metric_mse, dataset.metric_max),
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    Ok(FitReport {
        logs,
        diverged: None,
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

/// Renders the epoch log as CSV (`epoch,loss,penalty,a,b,c,d,psnr,seconds`,
/// LF line endings). With `include_timing` off, the seconds column is
/// zeroed so identical runs produce byte-identical logs.
pub fn epoch_log_csv(logs: &[EpochLog], include_timing: bool) -> String {
    let mut out = String::from("epoch,loss,penalty,a,b,c,d,psnr,seconds\n");
    for row in logs {
        let seconds = if include_timing {
            format!("{:.3}", row.seconds)
        } else {
            "0.000".to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.epoch,
            fmt_value(row.loss),
            fmt_value(row.penalty),
            fmt_value(row.a),
            fmt_value(row.b),
            fmt_value(row.c),
            fmt_value(row.d),
            fmt_value(row.psnr),
            seconds,
        ));
    }
    out
}
