//! Signal containers, coordinate grids, IO, corruption models and quality
//! metrics.

mod audio;
pub mod fixtures;
mod grid;
mod image;
mod mask;
mod metrics;
mod noise;
mod volume;

pub use audio::{load_wav, save_wav, AudioSignal};
pub use grid::{make_grid, CoordinateGrid};
pub use image::{downsample, load_png, save_png, upsample_replicate, ImageSignal};
pub use mask::{load_mask_png, random_mask, save_mask_png, SampleMask};
pub use metrics::{iou, mse, psnr, psnr_from_mse, ssim_image, ssim_plane};
pub use noise::add_sensor_noise;
pub use volume::{load_volume, save_volume, OccupancyVolume};
