//! Parallel-beam projection operators and the sinogram-domain fitting loop
//! for sparse-view reconstruction.
//!
//! Rays are sampled at unit-pixel steps with bilinear interpolation and zero
//! outside the image support; the adjoint scatters through the transposed
//! interpolation weights, so `<R x, y> == <x, R^T y>` holds to rounding.
//! Detector offsets are centered on the image center.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::mat::Mat;
use crate::signals::{make_grid, psnr_from_mse, ImageSignal};
use crate::training::{
    adam_step, constraint_penalty, flatten_grads, lr_at, AdamState, EpochLog, FitReport,
    LossConfig, ModelBundle, TrainConfig,
};
use crate::{Error, Result};

/// Projection data: one row of line integrals per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub angles: Vec<f64>,
    pub bins: usize,
    /// `(angles, bins)` matrix.
    pub values: Mat,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, bins: usize, values: Mat) -> Result<Self> {
        if values.rows() != angles.len() || values.cols() != bins {
            return Err(Error::shape(
                "sinogram",
                format!("{}x{}", angles.len(), bins),
                format!("{}x{}", values.rows(), values.cols()),
            ));
        }
        validate_angles(&angles)?;
        Ok(Sinogram {
            angles,
            bins,
            values,
        })
    }

    pub fn flattened(&self) -> &[f64] {
        self.values.as_slice()
    }
}

fn validate_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::Config("need at least one projection angle".into()));
    }
    for pair in angles.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config("angles must be strictly increasing".into()));
        }
    }
    if angles[0] < 0.0 || *angles.last().unwrap() >= std::f64::consts::PI {
        return Err(Error::Config("angles must lie in [0, pi)".into()));
    }
    Ok(())
}

/// `count` angles uniformly spaced over `[0, pi)`.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| std::f64::consts::PI * i as f64 / count as f64)
        .collect()
}

/// Default detector bin count: the padded image diagonal, rounded up.
pub fn default_bins(n: usize) -> usize {
    ((n as f64) * std::f64::consts::SQRT_2).ceil() as usize
}

struct Geometry {
    n: usize,
    bins: usize,
    steps: usize,
}

impl Geometry {
    fn new(n: usize, bins: usize) -> Self {
        Geometry {
            n,
            bins,
            steps: bins,
        }
    }

    /// Visits every bilinear tap of one ray: `f(pixel_index, weight)`.
    #[inline]
    fn trace_ray(&self, angle: f64, bin: usize, mut f: impl FnMut(usize, f64)) {
        let (sin_t, cos_t) = angle.sin_cos();
        let s = bin as f64 - (self.bins as f64 - 1.0) / 2.0;
        let center = (self.n as f64 - 1.0) / 2.0;
        let t0 = -((self.steps as f64 - 1.0) / 2.0);
        for k in 0..self.steps {
            let t = t0 + k as f64;
            // Ray direction is perpendicular to the detector axis.
            let x = s * cos_t - t * sin_t + center;
            let y = s * sin_t + t * cos_t + center;
            let ix = x.floor();
            let iy = y.floor();
            let fx = x - ix;
            let fy = y - iy;
            let (ix, iy) = (ix as isize, iy as isize);
            let n = self.n as isize;
            let mut visit = |px: isize, py: isize, w: f64| {
                if w != 0.0 && px >= 0 && px < n && py >= 0 && py < n {
                    f((py * n + px) as usize, w);
                }
            };
            visit(ix, iy, (1.0 - fx) * (1.0 - fy));
            visit(ix + 1, iy, fx * (1.0 - fy));
            visit(ix, iy + 1, (1.0 - fx) * fy);
            visit(ix + 1, iy + 1, fx * fy);
        }
    }
}

fn to_square(img: &ImageSignal) -> Result<(Vec<f64>, usize)> {
    if img.channels != 1 {
        return Err(Error::Config(
            "radon transform expects a grayscale image".into(),
        ));
    }
    if img.height == img.width {
        return Ok((img.data.clone(), img.height));
    }
    // Zero-pad to the larger dimension, centered.
    let n = img.height.max(img.width);
    let oy = (n - img.height) / 2;
    let ox = (n - img.width) / 2;
    let mut data = vec![0.0; n * n];
    for y in 0..img.height {
        for x in 0..img.width {
            data[(y + oy) * n + x + ox] = img.get(y, x, 0);
        }
    }
    Ok((data, n))
}

/// Line-integral projections of a grayscale image at the given angles.
/// Non-square images are zero-padded to a centered square first.
pub fn radon(img: &ImageSignal, angles: &[f64]) -> Result<Sinogram> {
    validate_angles(angles)?;
    let (data, n) = to_square(img)?;
    let bins = default_bins(n);
    let geo = Geometry::new(n, bins);
    let rows: Vec<Vec<f64>> = angles
        .par_iter()
        .map(|&angle| {
            let mut row = vec![0.0; bins];
            for (b, dst) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                geo.trace_ray(angle, b, |pix, w| acc += w * data[pix]);
                *dst = acc;
            }
            row
        })
        .collect();
    let mut values = Mat::zeros(angles.len(), bins);
    for (i, row) in rows.into_iter().enumerate() {
        values.row_mut(i).copy_from_slice(&row);
    }
    Sinogram::new(angles.to_vec(), bins, values)
}

/// Exact adjoint of [`radon`] (unfiltered backprojection through the
/// transposed interpolation weights). `dims` is `(height, width)`; the
/// result is cropped out of the padded square the forward pass used.
pub fn radon_adjoint(sino: &Sinogram, dims: (usize, usize)) -> Result<ImageSignal> {
    let (h, w) = dims;
    let n = h.max(w);
    if sino.bins != default_bins(n) {
        return Err(Error::shape("sinogram bins", default_bins(n), sino.bins));
    }
    let geo = Geometry::new(n, sino.bins);
    // Per-angle partial images reduced in angle order.
    let partials: Vec<Vec<f64>> = sino
        .angles
        .par_iter()
        .enumerate()
        .map(|(i, &angle)| {
            let mut img = vec![0.0; n * n];
            let row = sino.values.row(i);
            for (b, &v) in row.iter().enumerate() {
                // Scattering zeros adds nothing; skip them.
                if v != 0.0 {
                    geo.trace_ray(angle, b, |pix, wgt| img[pix] += wgt * v);
                }
            }
            img
        })
        .collect();
    let mut square = vec![0.0; n * n];
    for partial in &partials {
        for (dst, &v) in square.iter_mut().zip(partial) {
            *dst += v;
        }
    }
    let oy = (n - h) / 2;
    let ox = (n - w) / 2;
    let mut out = ImageSignal::new(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            out.set(y, x, 0, square[(y + oy) * n + x + ox]);
        }
    }
    Ok(out)
}

/// Adds iid Gaussian detector noise to each sinogram cell.
pub fn add_detector_noise(sino: &Sinogram, std: f64, rng: &mut impl rand::Rng) -> Sinogram {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, std).expect("std must be finite and >= 0");
    let mut out = sino.clone();
    for v in out.values.as_mut_slice() {
        *v += normal.sample(rng);
    }
    out
}

/// Sinogram CSV: a `# angles=... bins=...` header line, then one comma-
/// separated row per angle.
pub fn save_sinogram_csv(sino: &Sinogram, path: &Path) -> Result<()> {
    let mut out = String::new();
    let angle_list: Vec<String> = sino.angles.iter().map(|a| format!("{a}")).collect();
    out.push_str(&format!(
        "# angles={} bins={}\n",
        angle_list.join(","),
        sino.bins
    ));
    for i in 0..sino.angles.len() {
        let row: Vec<String> = sino.values.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_sinogram_csv(path: &Path) -> Result<Sinogram> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty sinogram file".into()))?;
    let header = header
        .strip_prefix("# angles=")
        .ok_or_else(|| Error::Format("missing sinogram header".into()))?;
    let (angle_part, bins_part) = header
        .split_once(" bins=")
        .ok_or_else(|| Error::Format("missing bins field".into()))?;
    let angles: Vec<f64> = angle_part
        .split(',')
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad angle: {e}")))?;
    let bins: usize = bins_part
        .trim()
        .parse()
        .map_err(|e| Error::Format(format!("bad bins: {e}")))?;
    let mut values = Mat::zeros(angles.len(), bins);
    for (i, line) in lines.enumerate() {
        if i >= angles.len() {
            return Err(Error::Format("too many sinogram rows".into()));
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad value: {e}")))?;
        if row.len() != bins {
            return Err(Error::shape("sinogram row", bins, row.len()));
        }
        values.row_mut(i).copy_from_slice(&row);
    }
    Sinogram::new(angles, bins, values)
}

/// A sparse-view reconstruction problem.
#[derive(Debug, Clone)]
pub struct CtProblem {
    pub measured: Sinogram,
    /// Square reconstruction grid side length.
    pub image_size: usize,
}

impl CtProblem {
    pub fn projection_count(&self) -> usize {
        self.measured.angles.len()
    }
}

pub struct CtFitResult {
    pub reconstruction: ImageSignal,
    pub report: FitReport,
}

/// Fits the composer so that projections of its output match the measured
/// sinogram. The latent code comes from the flattened measured sinogram.
/// `ground_truth`, when provided, only feeds the logged PSNR.
pub fn ct_fit(
    problem: &CtProblem,
    bundle: &mut ModelBundle,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    ground_truth: Option<&ImageSignal>,
) -> Result<CtFitResult> {
    let n = problem.image_size;
    if bundle.composer.input_dim() != 2 || bundle.composer.output_dim() != 1 {
        return Err(Error::Config(
            "ct reconstruction needs a 2-in 1-out composer".into(),
        ));
    }
    if let Some(gt) = ground_truth {
        if gt.height != n || gt.width != n || gt.channels != 1 {
            return Err(Error::shape(
                "ct ground truth",
                format!("{n}x{n}x1"),
                format!("{}x{}x{}", gt.height, gt.width, gt.channels),
            ));
        }
    }
    let grid = make_grid(&[n, n])?;
    let coords = grid.coords();
    let total = coords.cols();
    let latent_input: Vec<f64> = problem.measured.flattened().to_vec();
    let sino_count = (problem.measured.angles.len() * problem.measured.bins) as f64;

    let layout = bundle.param_layout();
    let mut flat = bundle.flatten_params();
    let mut adam = AdamState::new(flat.len());
    let mut prev_flat = flat.clone();

    let tile = train_cfg.chunk.max(1).min(256);
    let bounds: Vec<(usize, usize)> = (0..total)
        .step_by(tile)
        .map(|lo| (lo, (lo + tile).min(total)))
        .collect();

    let mut logs = Vec::with_capacity(train_cfg.epochs);
    let mut diverged = None;

    for epoch in 0..train_cfg.epochs {
        let started = Instant::now();
        let conditioning = bundle.conditioning_forward(Some(&latent_input), None)?;
        let params = conditioning.params;
        let eff = params.effective();
        let (penalty, penalty_eff_grads) = constraint_penalty(&eff, loss_cfg);

        // Full-grid forward, keeping traces per tile: the loss couples all
        // pixels through the projection operator.
        let composer = &bundle.composer;
        let traces: Vec<crate::nn::ForwardTrace> = bounds
            .par_iter()
            .map(|&(lo, hi)| composer.forward(&coords.col_range(lo, hi), &params))
            .collect::<Result<_>>()?;
        let mut pred = ImageSignal::new(n, n, 1);
        for ((lo, hi), trace) in bounds.iter().zip(&traces) {
            pred.data[*lo..*hi].copy_from_slice(trace.output.row(0));
        }

        let projected = radon(&pred, &problem.measured.angles)?;
        let mut residual = projected.values.clone();
        let mut sq = 0.0;
        for (r, &m) in residual
            .as_mut_slice()
            .iter_mut()
            .zip(problem.measured.values.as_slice())
        {
            *r -= m;
            sq += *r * *r;
            *r *= 2.0 / sino_count;
        }
        let data_loss = sq / sino_count;
        let loss = data_loss + penalty;
        if !loss.is_finite() {
            bundle.scatter_params(&prev_flat);
            diverged = Some(epoch);
            break;
        }

        let grad_sino = Sinogram::new(
            problem.measured.angles.clone(),
            problem.measured.bins,
            residual,
        )?;
        let pixel_grad = radon_adjoint(&grad_sino, (n, n))?;

        // Backward per tile against the pixel-domain gradient slice.
        let tile_grads: Vec<crate::nn::ComposerGradients> = bounds
            .par_iter()
            .zip(&traces)
            .map(|(&(lo, hi), trace)| {
                let mut g = Mat::zeros(1, hi - lo);
                g.row_mut(0).copy_from_slice(&pixel_grad.data[lo..hi]);
                composer.backward(trace, &params, &g, false)
            })
            .collect::<Result<_>>()?;
        let mut composer_grads = crate::nn::ComposerGradients::zeros_like(composer);
        for g in &tile_grads {
            composer_grads.add_assign(g);
        }
        drop(tile_grads);
        drop(traces);

        let jac = params.raw_jacobian();
        let mut raw_grads = composer_grads.raw_params;
        for i in 0..4 {
            raw_grads[i] += penalty_eff_grads[i] * jac[i];
        }
        let (harm_grads, conv_grads) = bundle.conditioning_backward(&conditioning, raw_grads)?;
        let grad_flat = flatten_grads(&composer_grads, harm_grads.as_ref(), conv_grads.as_ref());

        prev_flat.copy_from_slice(&flat);
        adam_step(
            &mut adam,
            &mut flat,
            &grad_flat,
            lr_at(epoch, train_cfg),
            &layout,
        )?;
        bundle.scatter_params(&flat);

        let psnr = match ground_truth {
            Some(gt) => {
                let m = crate::signals::mse(&pred.data, &gt.data)?;
                psnr_from_mse(m, 1.0)
            }
            None => {
                let peak = problem
                    .measured
                    .values
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max);
                psnr_from_mse(data_loss, peak.max(1e-12))
            }
        };
        logs.push(EpochLog {
            epoch,
            loss: data_loss,
            penalty,
            a: eff.a,
            b: eff.b,
            c: eff.c,
            d: eff.d,
            psnr,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    // Final reconstruction with the trained parameters.
    let params = bundle.activation_params(Some(&latent_input))?;
    let out = bundle.composer.eval_chunked(coords, &params, 256)?;
    let reconstruction = ImageSignal::from_targets(n, n, &out)?;
    Ok(CtFitResult {
        reconstruction,
        report: FitReport { logs, diverged },
    })
}
