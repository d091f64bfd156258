//! Mel-frequency cepstral coefficients as a fixed (non-trainable) latent
//! extractor for audio signals.
//!
//! Frames are Hann-windowed, turned into power spectra, pooled by a
//! triangular mel filterbank over 0..sr/2, log-compressed, and decorrelated
//! with a type-II DCT. The per-frame coefficient vectors are averaged over
//! time and zero-padded to the requested latent size.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MfccConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_len: 2048,
            hop: 512,
            n_mels: 40,
            n_coeffs: 20,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Triangular filterbank evaluated at the FFT bin frequencies.
fn mel_filterbank(
    n_mels: usize,
    n_bins: usize,
    frame_len: usize,
    sample_rate: f64,
) -> Vec<Vec<f64>> {
    let mel_max = hz_to_mel(sample_rate / 2.0);
    // n_mels filters need n_mels + 2 edge points on the mel axis.
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_max * i as f64 / (n_mels + 1) as f64)
        .collect();
    let mut filters = vec![vec![0.0; n_bins]; n_mels];
    for k in 0..n_bins {
        let freq = k as f64 * sample_rate / frame_len as f64;
        let mel = hz_to_mel(freq);
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            if mel > lo && mel < hi {
                filters[m][k] = if mel <= mid {
                    (mel - lo) / (mid - lo)
                } else {
                    (hi - mel) / (hi - mid)
                };
            }
        }
    }
    filters
}

/// Per-frame coefficient vectors (`n_coeffs` each). Frames past the end of
/// the signal read zeros; a short signal still yields one frame.
pub fn mfcc_per_frame(
    samples: &[f64],
    sample_rate: u32,
    cfg: &MfccConfig,
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::Config("audio signal is empty".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    let n = cfg.frame_len;
    let n_frames = if samples.len() <= n {
        1
    } else {
        1 + (samples.len() - n) / cfg.hop
    };
    let n_bins = n / 2 + 1;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    let filters = mel_filterbank(cfg.n_mels, n_bins, n, sample_rate as f64);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut out = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for f in 0..n_frames {
        let start = f * cfg.hop;
        for (i, c) in buf.iter_mut().enumerate() {
            let s = samples.get(start + i).copied().unwrap_or(0.0);
            *c = Complex::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = filters
            .iter()
            .map(|filt| {
                let e: f64 = filt.iter().zip(&power).map(|(&w, &p)| w * p).sum();
                e.max(cfg.log_floor).ln()
            })
            .collect();
        // Type-II DCT, first n_coeffs terms.
        let m = cfg.n_mels as f64;
        let coeffs: Vec<f64> = (0..cfg.n_coeffs)
            .map(|j| {
                log_mel
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        v * (std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / m).cos()
                    })
                    .sum()
            })
            .collect();
        out.push(coeffs);
    }
    Ok(out)
}

/// Mean coefficient vector over frames, zero-padded or truncated to
/// `output_dim`.
pub fn mfcc_extract(
    samples: &[f64],
    sample_rate: u32,
    cfg: &MfccConfig,
    output_dim: usize,
) -> Result<Vec<f64>> {
    let frames = mfcc_per_frame(samples, sample_rate, cfg)?;
    let n = frames.len() as f64;
    let mut mean = vec![0.0; cfg.n_coeffs];
    for frame in &frames {
        for (dst, &v) in mean.iter_mut().zip(frame) {
            *dst += v;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    mean.resize(output_dim, 0.0);
    mean.truncate(output_dim);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_yields_dct_of_constant_log_floor() {
        let cfg = MfccConfig::default();
        let frames = mfcc_per_frame(&vec![0.0; 4096], 8000, &cfg).unwrap();
        let expected_c0 = cfg.n_mels as f64 * cfg.log_floor.ln();
        for frame in &frames {
            assert!((frame[0] - expected_c0).abs() < 1e-9);
            for &c in &frame[1..] {
                assert!(
                    c.abs() < 1e-9,
                    "higher coefficients of a constant must vanish"
                );
            }
        }
    }

    #[test]
    fn stationary_sinusoid_gives_identical_interior_frames() {
        let cfg = MfccConfig::default();
        // 16 cycles per hop keeps every frame phase-aligned.
        let sr = 8192u32;
        let freq = 16.0 * sr as f64 / cfg.hop as f64;
        let n = cfg.frame_len + 4 * cfg.hop;
        let sig: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        let frames = mfcc_per_frame(&sig, sr, &cfg).unwrap();
        assert!(frames.len() >= 3);
        for frame in &frames[1..] {
            for (a, b) in frame.iter().zip(&frames[0]) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hop_shift_of_periodic_signal_changes_mean_under_one_percent() {
        let cfg = MfccConfig::default();
        let sr = 8192u32;
        let freq = 8.0 * sr as f64 / cfg.hop as f64;
        let n = cfg.frame_len + 16 * cfg.hop;
        let sig: Vec<f64> = (0..n + cfg.hop)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        let a = mfcc_extract(&sig[..n], sr, &cfg, 20).unwrap();
        let b = mfcc_extract(&sig[cfg.hop..cfg.hop + n], sr, &cfg, 20).unwrap();
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(diff / norm < 0.01, "relative change {}", diff / norm);
    }

    #[test]
    fn output_is_padded_to_latent_size() {
        let cfg = MfccConfig::default();
        let sig: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.01).sin()).collect();
        let latent = mfcc_extract(&sig, 8000, &cfg, 64).unwrap();
        assert_eq!(latent.len(), 64);
        assert!(latent[20..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_audio_and_zero_rate_are_errors() {
        let cfg = MfccConfig::default();
        assert!(mfcc_extract(&[], 8000, &cfg, 64).is_err());
        assert!(mfcc_extract(&[0.1], 0, &cfg, 64).is_err());
    }
}
