//! The conditioning MLP mapping a latent code to the raw activation
//! quadruple, including its exact backward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::mat::Mat;
use crate::nn::DenseLayer;
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x * sigmoid(x)`.
#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// `d silu / dx = sigma(x) * (1 + x * (1 - sigma(x)))`.
#[inline]
pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Normalizes `v` to zero mean / unit variance over the vector, then applies
/// the affine `gamma`/`beta`.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::Config(
            "layer norm needs at least two features".into(),
        ));
    }
    if gamma.len() != v.len() || beta.len() != v.len() {
        return Err(Error::shape("layer_norm params", v.len(), gamma.len()));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    Ok(v.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(&x, (&g, &b))| (x - mean) * inv_std * g + b)
        .collect())
}

/// Per-feature scale/shift learned alongside the normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNormParams {
    pub fn identity(dim: usize) -> Self {
        LayerNormParams {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizerLayer {
    pub dense: DenseLayer,
    pub norm: Option<LayerNormParams>,
}

/// Built-in layer stacks.
///
/// * `Image`: 64/32/4 features, plain SiLU between layers.
/// * `Denoise`: 32/16/8/4 features with layer normalization before each SiLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarmonizerProfile {
    Image,
    Denoise,
}

impl HarmonizerProfile {
    pub fn dims(&self) -> &'static [usize] {
        match self {
            HarmonizerProfile::Image => &[64, 32, 4],
            HarmonizerProfile::Denoise => &[32, 16, 8, 4],
        }
    }

    pub fn normalized(&self) -> bool {
        matches!(self, HarmonizerProfile::Denoise)
    }

    /// Constant bias each profile starts from.
    pub fn default_bias(&self) -> f64 {
        match self {
            HarmonizerProfile::Image => 0.31,
            HarmonizerProfile::Denoise => 0.0005,
        }
    }
}

/// The K-layer conditioning MLP. Hidden layers use SiLU (optionally after a
/// layer norm); the 4-unit head is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizerNetwork {
    layers: Vec<HarmonizerLayer>,
    input_dim: usize,
}

impl HarmonizerNetwork {
    /// Zero-weight network with the given feature sizes; the final entry of
    /// `dims` must be 4. `normalized` adds a layer norm before every hidden
    /// SiLU. Call [`HarmonizerNetwork::init`] to randomize.
    pub fn with_dims(input_dim: usize, dims: &[usize], normalized: bool) -> Result<Self> {
        if dims.last() != Some(&4) {
            return Err(Error::Config(format!(
                "harmonizer must end in 4 output features, got {:?}",
                dims
            )));
        }
        let mut layers = Vec::with_capacity(dims.len());
        let mut fan_in = input_dim;
        for (i, &fan_out) in dims.iter().enumerate() {
            let last = i + 1 == dims.len();
            layers.push(HarmonizerLayer {
                dense: DenseLayer::zeros(fan_out, fan_in),
                norm: if normalized && !last {
                    Some(LayerNormParams::identity(fan_out))
                } else {
                    None
                },
            });
            fan_in = fan_out;
        }
        Ok(HarmonizerNetwork { layers, input_dim })
    }

    pub fn from_profile(input_dim: usize, profile: HarmonizerProfile) -> Result<Self> {
        Self::with_dims(input_dim, profile.dims(), profile.normalized())
    }

    pub fn from_layers(layers: Vec<HarmonizerLayer>, input_dim: usize) -> Self {
        HarmonizerNetwork { layers, input_dim }
    }

    /// Draws weights from `N(0, std 0.001)` and sets every bias to
    /// `bias_value`; normalization scales reset to 1 and shifts to 0.
    pub fn init(&mut self, bias_value: f64, rng: &mut impl Rng) {
        let normal = Normal::new(0.0, 0.001).unwrap();
        for layer in &mut self.layers {
            let (fo, fi) = (layer.dense.fan_out(), layer.dense.fan_in());
            layer.dense.weights = Mat::from_fn(fo, fi, |_, _| normal.sample(rng));
            layer.dense.bias.fill(bias_value);
            if let Some(norm) = &mut layer.norm {
                *norm = LayerNormParams::identity(fo);
            }
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[HarmonizerLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [HarmonizerLayer] {
        &mut self.layers
    }

    /// Maps a latent code to the raw activation quadruple.
    pub fn forward(&self, latent: &[f64]) -> Result<([f64; 4], HarmonizerTrace)> {
        if latent.len() != self.input_dim {
            return Err(Error::shape(
                "harmonizer input",
                self.input_dim,
                latent.len(),
            ));
        }
        let mut x = latent.to_vec();
        let mut stages = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let last = i + 1 == self.layers.len();
            let fo = layer.dense.fan_out();
            let mut z = layer.dense.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = layer.dense.weights.row(o);
                for (k, &xv) in x.iter().enumerate() {
                    *zo += row[k] * xv;
                }
            }
            let (pre_act, norm_cache) = match &layer.norm {
                Some(norm) => {
                    let n = fo as f64;
                    let mean = z.iter().sum::<f64>() / n;
                    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let y_hat: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
                    let scaled: Vec<f64> = y_hat
                        .iter()
                        .zip(norm.gamma.iter().zip(&norm.beta))
                        .map(|(&yh, (&g, &b))| yh * g + b)
                        .collect();
                    (scaled, Some(NormCache { y_hat, inv_std }))
                }
                None => (z, None),
            };
            let out: Vec<f64> = if last {
                pre_act.clone()
            } else {
                pre_act.iter().map(|&v| silu(v)).collect()
            };
            stages.push(StageCache {
                input: x,
                norm: norm_cache,
                pre_act,
            });
            x = out;
        }
        let quad = [x[0], x[1], x[2], x[3]];
        Ok((
            quad,
            HarmonizerTrace {
                stages,
                output: quad,
            },
        ))
    }

    /// Gradients of every layer given dL/d(raw quadruple).
    pub fn backward(
        &self,
        trace: &HarmonizerTrace,
        output_grad: [f64; 4],
    ) -> Result<HarmonizerGradients> {
        if trace.stages.len() != self.layers.len() {
            return Err(Error::TraceMismatch(
                "harmonizer trace depth mismatch".into(),
            ));
        }
        let mut grads: Vec<HarmonizerLayerGrads> = self
            .layers
            .iter()
            .map(|l| HarmonizerLayerGrads::zeros(l))
            .collect();
        let mut g: Vec<f64> = output_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let stage = &trace.stages[i];
            let last = i + 1 == self.layers.len();
            // Through SiLU (hidden layers only).
            if !last {
                for (gv, &h) in g.iter_mut().zip(&stage.pre_act) {
                    *gv *= silu_derivative(h);
                }
            }
            // Through the layer norm.
            let mut gz = g;
            if let (Some(norm), Some(cache)) = (&layer.norm, &stage.norm) {
                let lg = &mut grads[i];
                let n = cache.y_hat.len() as f64;
                let g_gamma = lg.gamma.as_mut().unwrap();
                let g_beta = lg.beta.as_mut().unwrap();
                let mut g_yhat = vec![0.0; cache.y_hat.len()];
                for (j, &gv) in gz.iter().enumerate() {
                    g_beta[j] += gv;
                    g_gamma[j] += gv * cache.y_hat[j];
                    g_yhat[j] = gv * norm.gamma[j];
                }
                let mean_g = g_yhat.iter().sum::<f64>() / n;
                let mean_gy = g_yhat
                    .iter()
                    .zip(&cache.y_hat)
                    .map(|(&a, &b)| a * b)
                    .sum::<f64>()
                    / n;
                gz = g_yhat
                    .iter()
                    .zip(&cache.y_hat)
                    .map(|(&gy, &yh)| cache.inv_std * (gy - mean_g - yh * mean_gy))
                    .collect();
            }
            // Through the dense layer.
            {
                let lg = &mut grads[i];
                for (o, &gzo) in gz.iter().enumerate() {
                    lg.bias[o] += gzo;
                    let w_row = lg.weights.row_mut(o);
                    for (k, &xv) in stage.input.iter().enumerate() {
                        w_row[k] += gzo * xv;
                    }
                }
            }
            let mut gx = vec![0.0; layer.dense.fan_in()];
            for (o, &gzo) in gz.iter().enumerate() {
                let w_row = layer.dense.weights.row(o);
                for (k, dst) in gx.iter_mut().enumerate() {
                    *dst += w_row[k] * gzo;
                }
            }
            g = gx;
        }
        Ok(HarmonizerGradients {
            layers: grads,
            input: g,
        })
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    y_hat: Vec<f64>,
    inv_std: f64,
}

#[derive(Debug, Clone)]
struct StageCache {
    input: Vec<f64>,
    norm: Option<NormCache>,
    pre_act: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HarmonizerTrace {
    stages: Vec<StageCache>,
    pub output: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct HarmonizerLayerGrads {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

impl HarmonizerLayerGrads {
    fn zeros(layer: &HarmonizerLayer) -> Self {
        let fo = layer.dense.fan_out();
        HarmonizerLayerGrads {
            weights: Mat::zeros(fo, layer.dense.fan_in()),
            bias: vec![0.0; fo],
            gamma: layer.norm.as_ref().map(|_| vec![0.0; fo]),
            beta: layer.norm.as_ref().map(|_| vec![0.0; fo]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HarmonizerGradients {
    pub layers: Vec<HarmonizerLayerGrads>,
    /// dL/d(latent code).
    pub input: Vec<f64>,
}
