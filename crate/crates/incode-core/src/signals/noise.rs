//! Sensor noise model: photon (signal-dependent) plus readout counts.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::image::ImageSignal;
use crate::{Error, Result};

/// Applies `y = (Poisson(tau * x) + Poisson(ro)) / tau` per value, clamped
/// to be non-negative. `tau` is the mean photon count at full scale, `ro`
/// the mean readout count.
pub fn add_sensor_noise(
    img: &ImageSignal,
    tau: f64,
    ro: f64,
    rng: &mut impl Rng,
) -> Result<ImageSignal> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    if ro < 0.0 {
        return Err(Error::Config(format!("ro must be >= 0, got {ro}")));
    }
    let readout = if ro > 0.0 {
        Some(Poisson::new(ro).expect("ro > 0"))
    } else {
        None
    };
    let mut out = img.clone();
    for v in &mut out.data {
        let photons = if *v > 0.0 {
            Poisson::new(tau * *v).expect("positive rate").sample(rng)
        } else {
            0.0
        };
        let read = readout.as_ref().map_or(0.0, |p| p.sample(rng));
        *v = ((photons + read) / tau).max(0.0);
    }
    Ok(out)
}
