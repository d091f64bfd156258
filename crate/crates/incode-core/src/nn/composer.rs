//! The coordinate MLP with the conditioned sinusoidal activation, plus its
//! exact reverse-mode gradients.
//!
//! Every hidden layer applies `y = a*sin(b*w0*(W y_prev + bias) + c) + d`
//! with one shared `(a, b, c, d)` quadruple; the output layer is linear.
//! Gradients with respect to weights, biases and the shared quadruple are
//! hand-derived for this fixed architecture; parameter gradients aggregate
//! over layers and batch. No general autodiff graph is involved.

use rand::Rng;

use super::activation::{activate_slice, ActivationParams};
use super::dense::{siren_init, DenseLayer};
use crate::mat::{
    accumulate_bias_grad, accumulate_weight_grad, affine_forward, backprop_input, Mat,
};
use crate::{Error, Result};

/// Coordinate network: `hidden_layers` conditioned sine layers followed by a
/// linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposerNetwork {
    layers: Vec<DenseLayer>,
    input_dim: usize,
    output_dim: usize,
    first_omega0: f64,
    hidden_omega0: f64,
}

pub const DEFAULT_DEPTH: usize = 5;
pub const DEFAULT_WIDTH: usize = 256;

impl ComposerNetwork {
    /// Fresh network with sinusoidal initialization. `depth` counts hidden
    /// layers; the linear output layer comes on top.
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        depth: usize,
        width: usize,
        first_omega0: f64,
        hidden_omega0: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if depth == 0 || width == 0 || input_dim == 0 || output_dim == 0 {
            return Err(Error::Config(
                "composer dims (input, output, depth, width) must all be >= 1".into(),
            ));
        }
        let mut layers = Vec::with_capacity(depth + 1);
        layers.push(siren_init(width, input_dim, true, first_omega0, rng)?);
        for _ in 1..depth {
            layers.push(siren_init(width, width, false, hidden_omega0, rng)?);
        }
        // The output layer reuses the hidden-layer bound; it sees inputs of
        // the same scale as any hidden layer.
        layers.push(siren_init(output_dim, width, false, hidden_omega0, rng)?);
        Ok(ComposerNetwork {
            layers,
            input_dim,
            output_dim,
            first_omega0,
            hidden_omega0,
        })
    }

    /// Rebuild from explicit layers (checkpoint loading).
    pub fn from_layers(
        layers: Vec<DenseLayer>,
        first_omega0: f64,
        hidden_omega0: f64,
    ) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Config(
                "composer needs at least one hidden and one output layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[1].fan_in() != pair[0].fan_out() {
                return Err(Error::shape(
                    "composer layer chain",
                    pair[0].fan_out(),
                    pair[1].fan_in(),
                ));
            }
        }
        let input_dim = layers[0].fan_in();
        let output_dim = layers[layers.len() - 1].fan_out();
        Ok(ComposerNetwork {
            layers,
            input_dim,
            output_dim,
            first_omega0,
            hidden_omega0,
        })
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Number of hidden (activated) layers.
    #[inline]
    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.layers[0].fan_out()
    }

    #[inline]
    pub fn first_omega0(&self) -> f64 {
        self.first_omega0
    }

    #[inline]
    pub fn hidden_omega0(&self) -> f64 {
        self.hidden_omega0
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    #[inline]
    fn omega0_at(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.first_omega0
        } else {
            self.hidden_omega0
        }
    }

    /// Forward pass keeping every pre-activation and hidden output so the
    /// backward pass can run on the same batch.
    pub fn forward(&self, coords: &Mat, params: &ActivationParams) -> Result<ForwardTrace> {
        if coords.rows() != self.input_dim {
            return Err(Error::shape(
                "composer input",
                self.input_dim,
                coords.rows(),
            ));
        }
        let batch = coords.cols();
        let eff = params.effective();
        let hidden = self.hidden_count();
        let mut pre_activations = Vec::with_capacity(hidden);
        let mut hidden_outputs = Vec::with_capacity(hidden);
        let mut current = coords;
        for l in 0..hidden {
            let layer = &self.layers[l];
            let mut z = Mat::zeros(layer.fan_out(), batch);
            affine_forward(&layer.weights, &layer.bias, current, &mut z);
            let mut y = Mat::zeros(layer.fan_out(), batch);
            let omega0 = self.omega0_at(l);
            for r in 0..z.rows() {
                activate_slice(z.row(r), y.row_mut(r), &eff, omega0);
            }
            pre_activations.push(z);
            hidden_outputs.push(y);
            current = hidden_outputs.last().unwrap();
        }
        let out_layer = &self.layers[hidden];
        let mut output = Mat::zeros(self.output_dim, batch);
        affine_forward(&out_layer.weights, &out_layer.bias, current, &mut output);
        Ok(ForwardTrace {
            inputs: coords.clone(),
            pre_activations,
            hidden_outputs,
            output,
            params_raw: params.raw(),
        })
    }

    /// Forward pass without a trace; cheaper when only outputs are needed.
    pub fn eval(&self, coords: &Mat, params: &ActivationParams) -> Result<Mat> {
        if coords.rows() != self.input_dim {
            return Err(Error::shape(
                "composer input",
                self.input_dim,
                coords.rows(),
            ));
        }
        let batch = coords.cols();
        let eff = params.effective();
        let hidden = self.hidden_count();
        let mut y = Mat::zeros(self.width(), batch);
        let mut z = Mat::zeros(self.width(), batch);
        for l in 0..hidden {
            let layer = &self.layers[l];
            if l == 0 {
                affine_forward(&layer.weights, &layer.bias, coords, &mut z);
            } else {
                affine_forward(&layer.weights, &layer.bias, &y, &mut z);
            }
            let omega0 = self.omega0_at(l);
            for r in 0..z.rows() {
                activate_slice(z.row(r), y.row_mut(r), &eff, omega0);
            }
        }
        let out_layer = &self.layers[hidden];
        let mut output = Mat::zeros(self.output_dim, batch);
        affine_forward(&out_layer.weights, &out_layer.bias, &y, &mut output);
        Ok(output)
    }

    /// Chunked parallel evaluation over column tiles; output order is
    /// independent of the thread count.
    pub fn eval_chunked(
        &self,
        coords: &Mat,
        params: &ActivationParams,
        tile: usize,
    ) -> Result<Mat> {
        use rayon::prelude::*;
        if coords.rows() != self.input_dim {
            return Err(Error::shape(
                "composer input",
                self.input_dim,
                coords.rows(),
            ));
        }
        let batch = coords.cols();
        let tile = tile.max(1);
        let bounds: Vec<(usize, usize)> = (0..batch)
            .step_by(tile)
            .map(|lo| (lo, (lo + tile).min(batch)))
            .collect();
        let parts: Vec<Mat> = bounds
            .par_iter()
            .map(|&(lo, hi)| self.eval(&coords.col_range(lo, hi), params))
            .collect::<Result<_>>()?;
        let mut output = Mat::zeros(self.output_dim, batch);
        for ((lo, hi), part) in bounds.into_iter().zip(parts) {
            for r in 0..self.output_dim {
                output.row_mut(r)[lo..hi].copy_from_slice(part.row(r));
            }
        }
        Ok(output)
    }

    /// Exact gradients for the batch recorded in `trace`.
    ///
    /// `output_grad` is dL/d(output), shape `(output_dim, batch)`. Raw
    /// activation-parameter gradients already include the `exp` factors.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        params: &ActivationParams,
        output_grad: &Mat,
        want_coord_grad: bool,
    ) -> Result<ComposerGradients> {
        let hidden = self.hidden_count();
        if trace.params_raw != params.raw() {
            return Err(Error::TraceMismatch(
                "activation parameters differ from the forward pass".into(),
            ));
        }
        if trace.pre_activations.len() != hidden
            || trace.inputs.rows() != self.input_dim
            || trace
                .hidden_outputs
                .iter()
                .any(|m| m.rows() != self.width())
        {
            return Err(Error::TraceMismatch(
                "trace shapes do not match this network".into(),
            ));
        }
        let batch = trace.inputs.cols();
        if output_grad.rows() != self.output_dim || output_grad.cols() != batch {
            return Err(Error::shape(
                "composer output grad",
                format!("{}x{}", self.output_dim, batch),
                format!("{}x{}", output_grad.rows(), output_grad.cols()),
            ));
        }

        let eff = params.effective();
        let mut layer_grads: Vec<LayerGrads> = self
            .layers
            .iter()
            .map(|l| LayerGrads::zeros(l.fan_out(), l.fan_in()))
            .collect();
        let mut eff_grads = [0.0f64; 4];

        // Output layer is linear.
        let out_layer = &self.layers[hidden];
        accumulate_weight_grad(
            output_grad,
            &trace.hidden_outputs[hidden - 1],
            &mut layer_grads[hidden].weights,
        );
        accumulate_bias_grad(output_grad, &mut layer_grads[hidden].bias);
        let mut grad = Mat::zeros(self.width(), batch);
        backprop_input(&out_layer.weights, output_grad, &mut grad);

        let mut dz = Mat::zeros(self.width(), batch);
        for l in (0..hidden).rev() {
            let omega0 = self.omega0_at(l);
            let z = &trace.pre_activations[l];
            // u = b*(w0*z) + c; y = a*sin(u) + d
            for r in 0..z.rows() {
                let z_row = z.row(r);
                let g_row = grad.row(r);
                let dz_row = dz.row_mut(r);
                let mut da = 0.0;
                let mut db = 0.0;
                let mut dc = 0.0;
                let mut dd = 0.0;
                for ((&zv, &gv), dzv) in z_row.iter().zip(g_row).zip(dz_row.iter_mut()) {
                    let wz = omega0 * zv;
                    let u = eff.b * wz + eff.c;
                    let (s, co) = u.sin_cos();
                    da += gv * s;
                    db += gv * eff.a * wz * co;
                    dc += gv * eff.a * co;
                    dd += gv;
                    *dzv = gv * (eff.a * eff.b * omega0 * co);
                }
                eff_grads[0] += da;
                eff_grads[1] += db;
                eff_grads[2] += dc;
                eff_grads[3] += dd;
            }
            let input = if l == 0 {
                &trace.inputs
            } else {
                &trace.hidden_outputs[l - 1]
            };
            accumulate_weight_grad(&dz, input, &mut layer_grads[l].weights);
            accumulate_bias_grad(&dz, &mut layer_grads[l].bias);
            if l > 0 {
                let mut next = Mat::zeros(self.layers[l].fan_in(), batch);
                backprop_input(&self.layers[l].weights, &dz, &mut next);
                grad = next;
            } else if want_coord_grad {
                let mut coords = Mat::zeros(self.input_dim, batch);
                backprop_input(&self.layers[0].weights, &dz, &mut coords);
                return Ok(ComposerGradients {
                    layers: layer_grads,
                    raw_params: raw_from_effective(eff_grads, params),
                    coords: Some(coords),
                });
            }
        }

        Ok(ComposerGradients {
            layers: layer_grads,
            raw_params: raw_from_effective(eff_grads, params),
            coords: None,
        })
    }
}

fn raw_from_effective(eff_grads: [f64; 4], params: &ActivationParams) -> [f64; 4] {
    let jac = params.raw_jacobian();
    [
        eff_grads[0] * jac[0],
        eff_grads[1] * jac[1],
        eff_grads[2] * jac[2],
        eff_grads[3] * jac[3],
    ]
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Mat,
    /// `z_l` per hidden layer.
    pub pre_activations: Vec<Mat>,
    /// `y_l` per hidden layer.
    pub hidden_outputs: Vec<Mat>,
    pub output: Mat,
    params_raw: [f64; 4],
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.inputs.cols()
    }
}

/// Weight/bias gradient pair for one dense layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        LayerGrads {
            weights: Mat::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }
}

/// Gradients of the composer; `raw_params` are with respect to the raw
/// quadruple, aggregated over layers and batch.
#[derive(Debug, Clone)]
pub struct ComposerGradients {
    pub layers: Vec<LayerGrads>,
    pub raw_params: [f64; 4],
    pub coords: Option<Mat>,
}

impl ComposerGradients {
    pub fn zeros_like(net: &ComposerNetwork) -> Self {
        ComposerGradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrads::zeros(l.fan_out(), l.fan_in()))
                .collect(),
            raw_params: [0.0; 4],
            coords: None,
        }
    }

    /// Elementwise accumulation, used by the ordered tile reduction.
    pub fn add_assign(&mut self, other: &ComposerGradients) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(src.weights.as_slice())
            {
                *d += s;
            }
            for (d, s) in dst.bias.iter_mut().zip(&src.bias) {
                *d += s;
            }
        }
        for i in 0..4 {
            self.raw_params[i] += other.raw_params[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net(seed: u64) -> ComposerNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComposerNetwork::new(2, 1, 3, 8, 30.0, 30.0, &mut rng).unwrap()
    }

    fn random_coords(seed: u64, dim: usize, batch: usize) -> Mat {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(dim, batch, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Straight-line re-implementation of the activated recursion, one point
    /// at a time, in the documented accumulation order.
    fn reference_forward(
        net: &ComposerNetwork,
        params: &ActivationParams,
        point: &[f64],
    ) -> Vec<f64> {
        let eff = params.effective();
        let mut y: Vec<f64> = point.to_vec();
        for l in 0..net.hidden_count() {
            let layer = &net.layers()[l];
            let omega0 = if l == 0 {
                net.first_omega0()
            } else {
                net.hidden_omega0()
            };
            let mut next = Vec::with_capacity(layer.fan_out());
            for o in 0..layer.fan_out() {
                let mut acc = layer.bias[o];
                for (k, &yv) in y.iter().enumerate() {
                    acc += layer.weights.get(o, k) * yv;
                }
                next.push(eff.a * (eff.b * (omega0 * acc) + eff.c).sin() + eff.d);
            }
            y = next;
        }
        let out = &net.layers()[net.hidden_count()];
        (0..out.fan_out())
            .map(|o| {
                let mut acc = out.bias[o];
                for (k, &yv) in y.iter().enumerate() {
                    acc += out.weights.get(o, k) * yv;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn forward_matches_straight_line_recursion() {
        let net = tiny_net(3);
        let params = ActivationParams::from_raw([0.2, -0.1, 0.3, 0.05]);
        let coords = random_coords(11, 2, 17);
        let trace = net.forward(&coords, &params).unwrap();
        for b in 0..17 {
            let point = [coords.get(0, b), coords.get(1, b)];
            let expected = reference_forward(&net, &params, &point);
            let got = trace.output.get(0, b);
            assert!(
                (got - expected[0]).abs() <= 1e-12,
                "batch {b}: {got} vs {}",
                expected[0]
            );
        }
    }

    #[test]
    fn identity_params_match_plain_sine_network_bitwise() {
        let net = tiny_net(5);
        let params = ActivationParams::identity();
        let coords = random_coords(12, 2, 9);
        let trace = net.forward(&coords, &params).unwrap();
        // Plain sine recursion y_l = sin(w0 * (W y + b)).
        for b in 0..9 {
            let mut y = vec![coords.get(0, b), coords.get(1, b)];
            for l in 0..net.hidden_count() {
                let layer = &net.layers()[l];
                let omega0 = if l == 0 { 30.0 } else { 30.0 };
                let mut next = Vec::new();
                for o in 0..layer.fan_out() {
                    let mut acc = layer.bias[o];
                    for (k, &yv) in y.iter().enumerate() {
                        acc += layer.weights.get(o, k) * yv;
                    }
                    next.push((omega0 * acc).sin());
                }
                y = next;
            }
            let out = &net.layers()[net.hidden_count()];
            let mut acc = out.bias[0];
            for (k, &yv) in y.iter().enumerate() {
                acc += out.weights.get(0, k) * yv;
            }
            assert_eq!(trace.output.get(0, b), acc);
        }
    }

    #[test]
    fn zero_weights_collapse_to_constant_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ComposerNetwork::new(2, 1, 2, 4, 30.0, 30.0, &mut rng).unwrap();
        for layer in net.layers_mut() {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        // Put a nonzero output weight row and bias back to read the constant.
        let hidden = net.hidden_count();
        net.layers_mut()[hidden].weights.fill(1.0);
        net.layers_mut()[hidden].bias.fill(0.25);
        let params = ActivationParams::from_effective(2.0, 3.0, 0.7, 0.1).unwrap();
        let eff = params.effective();
        let coords = random_coords(8, 2, 5);
        let trace = net.forward(&coords, &params).unwrap();
        let constant = eff.a * eff.c.sin() + eff.d;
        for b in 0..5 {
            let expect = 4.0 * constant + 0.25;
            assert!((trace.output.get(0, b) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_outputs_respect_amplitude_bound() {
        let net = tiny_net(9);
        let params = ActivationParams::from_raw([0.4, 0.2, -0.5, 0.3]);
        let eff = params.effective();
        let coords = random_coords(21, 2, 64);
        let trace = net.forward(&coords, &params).unwrap();
        for y in &trace.hidden_outputs {
            for &v in y.iter() {
                assert!(v >= eff.d - eff.a - 1e-12 && v <= eff.d + eff.a + 1e-12);
            }
        }
    }

    #[test]
    fn zero_output_grad_means_zero_gradients() {
        let net = tiny_net(2);
        let params = ActivationParams::from_raw([0.1, 0.1, 0.1, 0.1]);
        let coords = random_coords(4, 2, 6);
        let trace = net.forward(&coords, &params).unwrap();
        let zero = Mat::zeros(1, 6);
        let grads = net.backward(&trace, &params, &zero, false).unwrap();
        assert_eq!(grads.raw_params, [0.0; 4]);
        for lg in &grads.layers {
            assert!(lg.weights.iter().all(|&v| v == 0.0));
            assert!(lg.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn offset_gradient_is_column_sums_through_output_layer() {
        // One hidden layer: y_out = W_out * (a sin(u) + d) + b_out, so
        // d(out)/dd summed over the batch is sum_b sum_j W_out[0][j].
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = ComposerNetwork::new(1, 1, 1, 6, 30.0, 30.0, &mut rng).unwrap();
        let params = ActivationParams::from_raw([0.0, 0.0, 0.2, 0.1]);
        let batch = 5;
        let coords = random_coords(3, 1, batch);
        let trace = net.forward(&coords, &params).unwrap();
        let ones = Mat::from_vec(1, batch, vec![1.0; batch]);
        let grads = net.backward(&trace, &params, &ones, false).unwrap();
        let w_out_sum: f64 = net.layers()[1].weights.iter().sum();
        let expected = w_out_sum * batch as f64;
        assert!((grads.raw_params[3] - expected).abs() < 1e-10);
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let net = tiny_net(2);
        let params = ActivationParams::from_raw([0.1; 4]);
        let other = ActivationParams::from_raw([0.2; 4]);
        let coords = random_coords(4, 2, 3);
        let trace = net.forward(&coords, &params).unwrap();
        let g = Mat::zeros(1, 3);
        assert!(matches!(
            net.backward(&trace, &other, &g, false),
            Err(Error::TraceMismatch(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let net = tiny_net(2);
        let params = ActivationParams::identity();
        let coords = random_coords(4, 3, 3);
        assert!(matches!(
            net.forward(&coords, &params),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn chunked_eval_matches_plain_eval() {
        let net = tiny_net(23);
        let params = ActivationParams::from_raw([0.1, -0.2, 0.4, 0.0]);
        let coords = random_coords(31, 2, 103);
        let full = net.eval(&coords, &params).unwrap();
        let chunked = net.eval_chunked(&coords, &params, 16).unwrap();
        assert_eq!(full, chunked);
    }
}
