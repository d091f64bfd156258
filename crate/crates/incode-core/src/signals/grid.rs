//! Normalized coordinate grids.

use crate::mat::Mat;
use crate::{Error, Result};

/// Row-major lattice of M-dimensional coordinates covering `[-1, 1]^M`
/// inclusively; the first axis varies slowest, matching signal
/// rasterization order.
#[derive(Debug, Clone)]
pub struct CoordinateGrid {
    dims: Vec<usize>,
    coords: Mat,
}

impl CoordinateGrid {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `(M, prod(dims))` coordinate matrix.
    pub fn coords(&self) -> &Mat {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-axis linspace over `[-1, 1]` with both endpoints included.
pub fn make_grid(dims: &[usize]) -> Result<CoordinateGrid> {
    if dims.is_empty() {
        return Err(Error::Config("grid needs at least one axis".into()));
    }
    for &n in dims {
        if n < 2 {
            return Err(Error::Config(format!(
                "grid axes need >= 2 points, got {n}"
            )));
        }
    }
    let total: usize = dims.iter().product();
    let m = dims.len();
    let mut coords = Mat::zeros(m, total);
    // Per-axis tick values.
    // (2i - (n-1)) / (n-1): the numerator is an exact integer, so negation
    // plus reversal along an axis is an exact symmetry of the grid.
    let ticks: Vec<Vec<f64>> = dims
        .iter()
        .map(|&n| {
            (0..n)
                .map(|i| (2 * i as i64 - (n as i64 - 1)) as f64 / (n - 1) as f64)
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; m];
    for p in 0..total {
        for axis in 0..m {
            coords.set(axis, p, ticks[axis][idx[axis]]);
        }
        // Row-major increment: last axis fastest.
        for axis in (0..m).rev() {
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok(CoordinateGrid {
        dims: dims.to_vec(),
        coords,
    })
}
