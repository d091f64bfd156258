//! Random sampling masks.

use std::path::Path;

use rand::Rng;

use super::image::{load_png, save_png, ImageSignal};
use crate::{Error, Result};

/// Boolean raster congruent with a signal, in the signal's raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMask {
    pub dims: Vec<usize>,
    pub data: Vec<bool>,
}

impl SampleMask {
    pub fn fraction_true(&self) -> f64 {
        self.data.iter().filter(|&&b| b).count() as f64 / self.data.len() as f64
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Each cell is kept independently with probability `fraction`.
pub fn random_mask(dims: &[usize], fraction: f64, rng: &mut impl Rng) -> Result<SampleMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "mask fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total: usize = dims.iter().product();
    let data = (0..total).map(|_| rng.gen::<f64>() < fraction).collect();
    Ok(SampleMask {
        dims: dims.to_vec(),
        data,
    })
}

/// Stores a 2-D mask as a 0/255 grayscale PNG.
pub fn save_mask_png(mask: &SampleMask, path: &Path) -> Result<()> {
    if mask.dims.len() != 2 {
        return Err(Error::Config("only 2-D masks serialize to PNG".into()));
    }
    let (h, w) = (mask.dims[0], mask.dims[1]);
    let mut img = ImageSignal::new(h, w, 1);
    for (dst, &b) in img.data.iter_mut().zip(&mask.data) {
        *dst = if b { 1.0 } else { 0.0 };
    }
    save_png(&img, path)
}

pub fn load_mask_png(path: &Path) -> Result<SampleMask> {
    let img = load_png(path)?;
    if img.channels != 1 {
        return Err(Error::Format("mask PNG must be grayscale".into()));
    }
    Ok(SampleMask {
        dims: vec![img.height, img.width],
        data: img.data.iter().map(|&v| v >= 0.5).collect(),
    })
}
