//! Dense layers and the sinusoidal-network initialization scheme.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::mat::Mat;
use crate::{Error, Result};

/// A dense affine layer `z = W y + b` with `weights` of shape
/// `(fan_out, fan_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        DenseLayer {
            weights: Mat::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    /// Number of scalar parameters (weights + biases).
    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Sinusoidal-network weight initialization.
///
/// The first layer draws from `U(-1/fan_in, 1/fan_in)`; deeper layers from
/// `U(-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0)`. Biases start at zero.
pub fn siren_init(
    fan_out: usize,
    fan_in: usize,
    is_first: bool,
    omega0: f64,
    rng: &mut impl Rng,
) -> Result<DenseLayer> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Config("layer dims must be >= 1".into()));
    }
    if !(omega0 > 0.0) {
        return Err(Error::Config(format!("omega0 must be > 0, got {omega0}")));
    }
    let bound = if is_first {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / omega0
    };
    let dist = Uniform::new_inclusive(-bound, bound);
    let weights = Mat::from_fn(fan_out, fan_in, |_, _| dist.sample(rng));
    Ok(DenseLayer {
        weights,
        bias: vec![0.0; fan_out],
    })
}
