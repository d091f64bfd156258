//! Image container and 8-bit PNG round trips.

use std::path::Path;

use crate::mat::Mat;
use crate::{Error, Result};

/// Raster image with values in `[0, 1]`, stored row-major as
/// `height x width x channels` (1 or 3 channels).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSignal {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageSignal {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        ImageSignal {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Targets matrix `(channels, pixels)` in raster order, matching
    /// `make_grid(&[height, width])`.
    pub fn to_targets(&self) -> Mat {
        let pixels = self.pixel_count();
        let mut out = Mat::zeros(self.channels, pixels);
        for p in 0..pixels {
            for c in 0..self.channels {
                out.set(c, p, self.data[p * self.channels + c]);
            }
        }
        out
    }

    /// Inverse of [`ImageSignal::to_targets`]; values are kept as-is (they
    /// get clamped at save time).
    pub fn from_targets(height: usize, width: usize, targets: &Mat) -> Result<Self> {
        let channels = targets.rows();
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!(
                "images carry 1 or 3 channels, got {channels}"
            )));
        }
        if targets.cols() != height * width {
            return Err(Error::shape(
                "image targets",
                height * width,
                targets.cols(),
            ));
        }
        let mut img = ImageSignal::new(height, width, channels);
        for p in 0..height * width {
            for c in 0..channels {
                img.data[p * channels + c] = targets.get(c, p);
            }
        }
        Ok(img)
    }

    /// Channel-averaged grayscale copy.
    pub fn to_gray(&self) -> ImageSignal {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = ImageSignal::new(self.height, self.width, 1);
        for p in 0..self.pixel_count() {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += self.data[p * 3 + c];
            }
            out.data[p] = acc / 3.0;
        }
        out
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Non-overlapping `k x k` box averaging; the image is cropped to the
/// largest `k`-divisible region first.
pub fn downsample(img: &ImageSignal, k: usize) -> ImageSignal {
    assert!(k >= 1);
    if k == 1 {
        return img.clone();
    }
    let oh = img.height / k;
    let ow = img.width / k;
    let mut out = ImageSignal::new(oh, ow, img.channels);
    let inv = 1.0 / (k * k) as f64;
    for y in 0..oh {
        for x in 0..ow {
            for c in 0..img.channels {
                let mut acc = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += img.get(y * k + dy, x * k + dx, c);
                    }
                }
                out.set(y, x, c, acc * inv);
            }
        }
    }
    out
}

/// Nearest-neighbor upsampling by replication (used for range checks and
/// quick previews, not reconstruction).
pub fn upsample_replicate(img: &ImageSignal, k: usize) -> ImageSignal {
    assert!(k >= 1);
    let mut out = ImageSignal::new(img.height * k, img.width * k, img.channels);
    for y in 0..out.height {
        for x in 0..out.width {
            for c in 0..img.channels {
                out.set(y, x, c, img.get(y / k, x / k, c));
            }
        }
    }
    out
}

/// Loads an 8-bit grayscale or RGB PNG; values scale to `[0, 1]` and clamp.
pub fn load_png(path: &Path) -> Result<ImageSignal> {
    let dynimg = image::open(path).map_err(|e| Error::Format(format!("png load: {e}")))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    match dynimg {
        image::DynamicImage::ImageLuma8(buf) => {
            let mut img = ImageSignal::new(h, w, 1);
            for (i, px) in buf.pixels().enumerate() {
                img.data[i] = px.0[0] as f64 / 255.0;
            }
            Ok(img)
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let mut img = ImageSignal::new(h, w, 3);
            for (i, px) in buf.pixels().enumerate() {
                for c in 0..3 {
                    img.data[i * 3 + c] = px.0[c] as f64 / 255.0;
                }
            }
            Ok(img)
        }
        other => Err(Error::Format(format!(
            "unsupported image layout {:?}; expected 8-bit gray or RGB",
            other.color()
        ))),
    }
}

/// Saves as 8-bit PNG, clamping and quantizing to 1/255.
pub fn save_png(img: &ImageSignal, path: &Path) -> Result<()> {
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    match img.channels {
        1 => {
            let buf = image::GrayImage::from_fn(img.width as u32, img.height as u32, |x, y| {
                image::Luma([quant(img.get(y as usize, x as usize, 0))])
            });
            buf.save(path)
                .map_err(|e| Error::Format(format!("png save: {e}")))
        }
        3 => {
            let buf = image::RgbImage::from_fn(img.width as u32, img.height as u32, |x, y| {
                image::Rgb([
                    quant(img.get(y as usize, x as usize, 0)),
                    quant(img.get(y as usize, x as usize, 1)),
                    quant(img.get(y as usize, x as usize, 2)),
                ])
            });
            buf.save(path)
                .map_err(|e| Error::Format(format!("png save: {e}")))
        }
        n => Err(Error::Format(format!("cannot save {n}-channel image"))),
    }
}
