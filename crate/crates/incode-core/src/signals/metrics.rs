//! Reconstruction quality metrics: PSNR, single-scale SSIM, IoU.

use super::image::ImageSignal;
use super::volume::OccupancyVolume;
use crate::{Error, Result};

/// Plain elementwise mean squared error.
pub fn mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape("mse operands", gt.len(), pred.len()));
    }
    let sum: f64 = pred.iter().zip(gt).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// `20*log10(max_val) - 10*log10(mse)`, in dB. A zero MSE yields the
/// positive-infinity sentinel (rendered as "inf" in logs). Written this way
/// so that for `max_val = 1` the identity `psnr = -10*log10(mse)` holds
/// exactly.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    20.0 * max_val.log10() - 10.0 * mse.log10()
}

pub fn psnr(pred: &[f64], gt: &[f64], max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, gt)?, max_val))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 1.0;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian blur: `(h, w)` -> `(h-10, w-10)`.
fn blur_valid(src: &[f64], h: usize, w: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * src[y * w + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Single-scale SSIM over one grayscale plane with an 11x11 sigma-1.5
/// Gaussian window, unit dynamic range, averaged over valid window positions.
pub fn ssim_plane(pred: &[f64], gt: &[f64], h: usize, w: usize) -> Result<f64> {
    if pred.len() != h * w || gt.len() != h * w {
        return Err(Error::shape(
            "ssim operands",
            h * w,
            pred.len().max(gt.len()),
        ));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Config(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let kernel = gaussian_kernel();
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| x * x).collect() };
    let prod: Vec<f64> = pred.iter().zip(gt).map(|(&a, &b)| a * b).collect();
    let mu_x = blur_valid(pred, h, w, &kernel);
    let mu_y = blur_valid(gt, h, w, &kernel);
    let xx = blur_valid(&sq(pred), h, w, &kernel);
    let yy = blur_valid(&sq(gt), h, w, &kernel);
    let xy = blur_valid(&prod, h, w, &kernel);
    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);
    let mut acc = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cxy = xy[i] - mx * my;
        acc +=
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(acc / mu_x.len() as f64)
}

/// SSIM of two images: grayscale directly, RGB as the mean of per-channel
/// SSIM values.
pub fn ssim_image(pred: &ImageSignal, gt: &ImageSignal) -> Result<f64> {
    if pred.height != gt.height || pred.width != gt.width || pred.channels != gt.channels {
        return Err(Error::shape(
            "ssim images",
            format!("{}x{}x{}", gt.height, gt.width, gt.channels),
            format!("{}x{}x{}", pred.height, pred.width, pred.channels),
        ));
    }
    let (h, w) = (pred.height, pred.width);
    let mut acc = 0.0;
    for c in 0..pred.channels {
        let plane = |img: &ImageSignal| -> Vec<f64> {
            (0..h * w).map(|p| img.data[p * img.channels + c]).collect()
        };
        acc += ssim_plane(&plane(pred), &plane(gt), h, w)?;
    }
    Ok(acc / pred.channels as f64)
}

/// Intersection over union of the thresholded prediction against the binary
/// ground truth; defined as 1 when both are empty.
pub fn iou(pred: &OccupancyVolume, gt: &OccupancyVolume, threshold: f64) -> Result<f64> {
    if (pred.nx, pred.ny, pred.nz) != (gt.nx, gt.ny, gt.nz) {
        return Err(Error::shape(
            "iou volumes",
            format!("{}x{}x{}", gt.nx, gt.ny, gt.nz),
            format!("{}x{}x{}", pred.nx, pred.ny, pred.nz),
        ));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let a = p > threshold;
        let b = g > 0.5;
        if a && b {
            inter += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_signals_give_infinite_psnr() {
        let v = vec![0.3, 0.7, 0.1];
        assert!(psnr(&v, &v, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn uniform_errors_hit_round_decibels() {
        let gt = vec![0.5; 100];
        let off1: Vec<f64> = gt.iter().map(|v| v + 0.1).collect();
        let off2: Vec<f64> = gt.iter().map(|v| v + 0.01).collect();
        assert!((psnr(&off1, &gt, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&off2, &gt, 1.0).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_mse_duality_is_exact_for_unit_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
            let m = mse(&a, &b).unwrap();
            assert_eq!(psnr(&a, &b, 1.0).unwrap(), -10.0 * m.log10());
        }
    }

    /// Direct per-window SSIM used as an independent oracle.
    fn ssim_reference(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
        let kernel = gaussian_kernel();
        let c1 = 0.01f64.powi(2);
        let c2 = 0.03f64.powi(2);
        let mut acc = 0.0;
        let mut count = 0;
        for wy in 0..=(h - 11) {
            for wx in 0..=(w - 11) {
                let (mut mx, mut my) = (0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let wgt = kernel[dy] * kernel[dx];
                        mx += wgt * pred[(wy + dy) * w + wx + dx];
                        my += wgt * gt[(wy + dy) * w + wx + dx];
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let wgt = kernel[dy] * kernel[dx];
                        let a = pred[(wy + dy) * w + wx + dx];
                        let b = gt[(wy + dy) * w + wx + dx];
                        vx += wgt * a * a;
                        vy += wgt * b * b;
                        cxy += wgt * a * b;
                    }
                }
                vx -= mx * mx;
                vy -= my * my;
                cxy -= mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64
    }

    #[test]
    fn identical_images_have_unit_ssim() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img: Vec<f64> = (0..20 * 16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s = ssim_plane(&img, &img, 20, 16).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_binary_image_scores_negative() {
        let mut img = vec![0.0; 16 * 16];
        for y in 0..16 {
            for x in 0..16 {
                img[y * 16 + x] = if (x / 4 + y / 4) % 2 == 0 { 1.0 } else { 0.0 };
            }
        }
        let inv: Vec<f64> = img.iter().map(|&v| 1.0 - v).collect();
        let s = ssim_plane(&inv, &img, 16, 16).unwrap();
        assert!(s < 0.0, "ssim of inverted pattern was {s}");
    }

    #[test]
    fn ssim_matches_direct_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..18 * 15).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|&v| (v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0))
            .collect();
        let fast = ssim_plane(&a, &b, 18, 15).unwrap();
        let slow = ssim_reference(&a, &b, 18, 15);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
    }

    #[test]
    fn tiny_images_are_rejected() {
        let v = vec![0.0; 100];
        assert!(ssim_plane(&v, &v, 10, 10).is_err());
    }

    #[test]
    fn iou_basic_cases() {
        let mut a = OccupancyVolume::new(4, 4, 4);
        let mut b = OccupancyVolume::new(4, 4, 4);
        // Identical.
        for i in 0..16 {
            a.data[i] = 1.0;
            b.data[i] = 1.0;
        }
        assert_eq!(iou(&a, &b, 0.5).unwrap(), 1.0);
        // Disjoint.
        let mut c = OccupancyVolume::new(4, 4, 4);
        for i in 20..36 {
            c.data[i] = 1.0;
        }
        assert_eq!(iou(&c, &b, 0.5).unwrap(), 0.0);
        // Half-overlapping equal size: 8 shared, union 24.
        let mut d = OccupancyVolume::new(4, 4, 4);
        for i in 8..24 {
            d.data[i] = 1.0;
        }
        assert!((iou(&d, &b, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        // Both empty.
        let e = OccupancyVolume::new(4, 4, 4);
        let f = OccupancyVolume::new(4, 4, 4);
        assert_eq!(iou(&e, &f, 0.5).unwrap(), 1.0);
    }
}
