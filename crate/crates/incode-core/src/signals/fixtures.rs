//! Deterministic synthetic inputs used as desk-scale defaults and test
//! fixtures. Everything here is a closed formula, so fixtures are identical
//! across runs and platforms.

use super::image::ImageSignal;
use super::volume::OccupancyVolume;

/// A natural-image stand-in: smooth shading, a couple of hard-edged shapes,
/// an oriented texture patch and mild vignetting, mixed per channel.
pub fn test_image(height: usize, width: usize, channels: usize) -> ImageSignal {
    assert!(channels == 1 || channels == 3);
    let mut img = ImageSignal::new(height, width, channels);
    let fw = (width.max(2) - 1) as f64;
    let fh = (height.max(2) - 1) as f64;
    for y in 0..height {
        for x in 0..width {
            let u = x as f64 / fw; // 0..1
            let v = y as f64 / fh;
            // Smooth background gradient.
            let base = 0.35 + 0.3 * u + 0.15 * (1.0 - v);
            // Disk with a hard edge.
            let disk = {
                let dx = u - 0.32;
                let dy = v - 0.38;
                if (dx * dx + dy * dy).sqrt() < 0.18 {
                    0.35
                } else {
                    0.0
                }
            };
            // Diagonal stripes in the lower-right quadrant.
            let stripes = if u > 0.55 && v > 0.5 {
                0.18 * ((40.0 * (u + 0.7 * v)).sin() * 0.5 + 0.5)
            } else {
                0.0
            };
            // Fine oriented texture.
            let texture = 0.06 * (31.0 * u).sin() * (27.0 * v + 4.0 * u).cos();
            // Vignette.
            let r2 = (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5);
            let vig = 1.0 - 0.35 * r2;
            let lum = ((base + disk + stripes + texture) * vig).clamp(0.0, 1.0);
            if channels == 1 {
                img.set(y, x, 0, lum);
            } else {
                // Channel-dependent tint keeps the channels correlated but
                // not identical.
                img.set(
                    y,
                    x,
                    0,
                    (lum * 1.05 - 0.02 * (9.0 * v).sin()).clamp(0.0, 1.0),
                );
                img.set(y, x, 1, lum);
                img.set(y, x, 2, (lum * 0.9 + 0.08 * u).clamp(0.0, 1.0));
            }
        }
    }
    img
}

/// Linear chirp over `[0, 1)`: instantaneous frequency sweeps `f0..f1`
/// cycles across the signal.
pub fn chirp(n: usize, f0: f64, f1: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let phase = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * (f1 - f0) * t * t);
            phase.sin()
        })
        .collect()
}

/// Audio fixture: a few stacked partials with a slow envelope, in
/// `[-1, 1]`.
pub fn test_audio(n: usize, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.8 * (1.0 - (-4.0 * t).exp()) * (-(1.2 * t)).exp().max(0.2);
            let s = 0.55 * (2.0 * std::f64::consts::PI * 220.0 * t).sin()
                + 0.3 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                + 0.15 * (2.0 * std::f64::consts::PI * 660.0 * t + 0.5).sin();
            (env * s).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Solid sphere of the given radius (normalized coordinates in `[-1, 1]`)
/// voxelized on an `n^3` grid.
pub fn sphere_volume(n: usize, radius: f64) -> OccupancyVolume {
    let mut vol = OccupancyVolume::new(n, n, n);
    let tick = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let (cx, cy, cz) = (tick(x), tick(y), tick(z));
                let inside = (cx * cx + cy * cy + cz * cz).sqrt() <= radius;
                vol.set(x, y, z, if inside { 1.0 } else { 0.0 });
            }
        }
    }
    vol
}

/// Solid torus around the z axis: ring radius `major`, tube radius `minor`.
pub fn torus_volume(n: usize, major: f64, minor: f64) -> OccupancyVolume {
    let mut vol = OccupancyVolume::new(n, n, n);
    let tick = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let (cx, cy, cz) = (tick(x), tick(y), tick(z));
                let ring = (cx * cx + cy * cy).sqrt() - major;
                let inside = (ring * ring + cz * cz).sqrt() <= minor;
                vol.set(x, y, z, if inside { 1.0 } else { 0.0 });
            }
        }
    }
    vol
}

/// Piecewise-constant ellipse phantom on an `n x n` grayscale grid: a skull-
/// like outer shell with a softer interior and a few inclusions.
pub fn ellipse_phantom(n: usize) -> ImageSignal {
    // (cx, cy, rx, ry, angle_deg, intensity delta)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 5] = [
        (0.0, 0.0, 0.72, 0.90, 0.0, 0.8),
        (0.0, 0.0, 0.62, 0.80, 0.0, -0.45),
        (0.20, 0.15, 0.18, 0.28, -18.0, 0.35),
        (-0.22, -0.05, 0.14, 0.22, 15.0, 0.25),
        (0.02, -0.35, 0.08, 0.08, 0.0, 0.45),
    ];
    let mut img = ImageSignal::new(n, n, 1);
    let tick = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    for y in 0..n {
        for x in 0..n {
            let (cx, cy) = (tick(x), tick(y));
            let mut v = 0.0;
            for &(ex, ey, rx, ry, ang, delta) in &ELLIPSES {
                let th = ang.to_radians();
                let dx = cx - ex;
                let dy = cy - ey;
                let rxp = dx * th.cos() + dy * th.sin();
                let ryp = -dx * th.sin() + dy * th.cos();
                if (rxp / rx).powi(2) + (ryp / ry).powi(2) <= 1.0 {
                    v += delta;
                }
            }
            img.set(y, x, 0, v.clamp(0.0, 1.0));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(test_image(32, 32, 3), test_image(32, 32, 3));
        assert_eq!(chirp(256, 1.0, 40.0), chirp(256, 1.0, 40.0));
        assert_eq!(sphere_volume(8, 0.6), sphere_volume(8, 0.6));
        assert_eq!(ellipse_phantom(16), ellipse_phantom(16));
    }

    #[test]
    fn image_values_stay_in_unit_range() {
        let img = test_image(48, 64, 3);
        assert!(img.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn sphere_volume_is_binary_and_centered() {
        let vol = sphere_volume(16, 0.6);
        assert!(vol.data.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(vol.get(8, 8, 8), 1.0);
        assert_eq!(vol.get(0, 0, 0), 0.0);
    }

    #[test]
    fn chirp_amplitude_is_bounded() {
        assert!(chirp(1024, 2.0, 60.0).iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn phantom_supported_inside_inscribed_circle() {
        let img = ellipse_phantom(64);
        let tick = |i: usize| -1.0 + 2.0 * i as f64 / 63.0;
        for y in 0..64 {
            for x in 0..64 {
                if img.get(y, x, 0) > 0.0 {
                    let r = (tick(x).powi(2) + tick(y).powi(2)).sqrt();
                    assert!(r < 0.95, "phantom mass at radius {r}");
                }
            }
        }
    }
}
