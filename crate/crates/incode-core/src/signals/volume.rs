//! Occupancy volumes and their raw-f32 file format.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::mat::Mat;
use crate::{Error, Result};

/// Voxel grid stored row-major `(nx, ny, nz)` with the last axis fastest,
/// matching `make_grid(&[nx, ny, nz])`. Ground-truth volumes hold exactly
/// 0 or 1; predictions are arbitrary reals.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyVolume {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<f64>,
}

impl OccupancyVolume {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        OccupancyVolume {
            nx,
            ny,
            nz,
            data: vec![0.0; nx * ny * nz],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[(x * self.ny + y) * self.nz + z]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        self.data[(x * self.ny + y) * self.nz + z] = v;
    }

    pub fn voxel_count(&self) -> usize {
        self.data.len()
    }

    /// `(1, voxels)` target matrix in raster order.
    pub fn to_targets(&self) -> Mat {
        Mat::from_vec(1, self.data.len(), self.data.clone())
    }

    pub fn from_targets(nx: usize, ny: usize, nz: usize, targets: &Mat) -> Result<Self> {
        if targets.rows() != 1 || targets.cols() != nx * ny * nz {
            return Err(Error::shape("volume targets", nx * ny * nz, targets.cols()));
        }
        Ok(OccupancyVolume {
            nx,
            ny,
            nz,
            data: targets.row(0).to_vec(),
        })
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct VolumeSidecar {
    dims: [usize; 3],
}

/// Writes little-endian f32 voxels plus a `<path>.json` sidecar holding the
/// dimensions. Values are stored at f32 precision.
pub fn save_volume(vol: &OccupancyVolume, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(vol.data.len() * 4);
    for &v in &vol.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&bytes)?;
    let sidecar = VolumeSidecar {
        dims: [vol.nx, vol.ny, vol.nz],
    };
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string(&sidecar).expect("sidecar serializes"),
    )?;
    Ok(())
}

pub fn load_volume(path: &Path) -> Result<OccupancyVolume> {
    let sidecar: VolumeSidecar = serde_json::from_str(
        &std::fs::read_to_string(sidecar_path(path))
            .map_err(|e| Error::Format(format!("missing volume sidecar: {e}")))?,
    )
    .map_err(|e| Error::Format(format!("bad volume sidecar: {e}")))?;
    let [nx, ny, nz] = sidecar.dims;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != nx * ny * nz * 4 {
        return Err(Error::Format(format!(
            "volume payload is {} bytes, expected {}",
            bytes.len(),
            nx * ny * nz * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(OccupancyVolume { nx, ny, nz, data })
}
