//! Trainable 1-D convolutional latent extractor.
//!
//! Two {conv, rectifier, max-pool} blocks followed by a final convolution;
//! a global average over the time axis produces the fixed-size latent code.
//! Works on any flattened sample sequence (raster-scanned images, volumes,
//! sinograms, sampled pixels).

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::{Error, Result};

/// Valid (no padding) stride-1 1-D convolution layer. Weights are stored
/// `[out_ch][in_ch][kernel]`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl Conv1dLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Conv1dLayer {
            weights: vec![0.0; out_ch * in_ch * kernel],
            bias: vec![0.0; out_ch],
            in_ch,
            out_ch,
            kernel,
        }
    }

    fn init(&mut self, rng: &mut impl Rng) {
        let fan_in = (self.in_ch * self.kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in &mut self.weights {
            *w = dist.sample(rng);
        }
        self.bias.fill(0.0);
    }

    #[inline]
    fn w(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_ch + i) * self.kernel + k]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `out[o][t] = bias[o] + sum_{i,k} w[o][i][k] * x[i][t+k]`.
    fn forward(&self, x: &Channels) -> Channels {
        let out_len = x.len - self.kernel + 1;
        let mut out = Channels::zeros(self.out_ch, out_len);
        for o in 0..self.out_ch {
            let row = out.channel_mut(o);
            row.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let x_row = x.channel(i);
                for k in 0..self.kernel {
                    let w = self.w(o, i, k);
                    for (t, dst) in row.iter_mut().enumerate() {
                        *dst += w * x_row[t + k];
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients and returns dL/d(input).
    fn backward(&self, x: &Channels, dout: &Channels, grads: &mut Conv1dGrads) -> Channels {
        let out_len = dout.len;
        let mut dx = Channels::zeros(self.in_ch, x.len);
        for o in 0..self.out_ch {
            let d_row = dout.channel(o);
            grads.bias[o] += d_row.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let x_row = x.channel(i);
                let dx_row = dx.channel_mut(i);
                for k in 0..self.kernel {
                    let mut acc = 0.0;
                    for t in 0..out_len {
                        acc += d_row[t] * x_row[t + k];
                        dx_row[t + k] += self.w(o, i, k) * d_row[t];
                    }
                    grads.weights[(o * self.in_ch + i) * self.kernel + k] += acc;
                }
            }
        }
        dx
    }
}

/// Multichannel sample buffer, channel-major.
#[derive(Debug, Clone)]
struct Channels {
    data: Vec<f64>,
    ch: usize,
    len: usize,
}

impl Channels {
    fn zeros(ch: usize, len: usize) -> Self {
        Channels {
            data: vec![0.0; ch * len],
            ch,
            len,
        }
    }

    fn from_signal(signal: &[f64]) -> Self {
        Channels {
            data: signal.to_vec(),
            ch: 1,
            len: signal.len(),
        }
    }

    #[inline]
    fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    #[inline]
    fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }
}

fn relu_inplace(x: &mut Channels) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Window-2 stride-2 max pooling; odd trailing element is dropped. Returns
/// the pooled buffer and the argmax offsets (0 or 1) for routing gradients.
fn max_pool2(x: &Channels) -> (Channels, Vec<u8>) {
    let out_len = x.len / 2;
    let mut out = Channels::zeros(x.ch, out_len);
    let mut arg = vec![0u8; x.ch * out_len];
    for c in 0..x.ch {
        let src = x.channel(c);
        for t in 0..out_len {
            let (a, b) = (src[2 * t], src[2 * t + 1]);
            if b > a {
                out.channel_mut(c)[t] = b;
                arg[c * out_len + t] = 1;
            } else {
                out.channel_mut(c)[t] = a;
            }
        }
    }
    (out, arg)
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1dGrads {
    fn zeros(layer: &Conv1dLayer) -> Self {
        Conv1dGrads {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvExtractorGrads {
    pub layers: [Conv1dGrads; 3],
}

/// Intermediate buffers a backward pass needs.
#[derive(Debug, Clone)]
pub struct ConvTrace {
    input: Channels,
    z1: Channels,
    p1: Channels,
    arg1: Vec<u8>,
    z2: Channels,
    p2: Channels,
    arg2: Vec<u8>,
    z3_len: usize,
}

/// The extractor: conv(k=7) -> relu -> pool, conv(k=5) -> relu -> pool,
/// conv(k=3), global average. Channel widths default to 16/32/64; the last
/// width is the latent size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSignalExtractor {
    pub conv1: Conv1dLayer,
    pub conv2: Conv1dLayer,
    pub conv3: Conv1dLayer,
}

pub const DEFAULT_CONV_CHANNELS: [usize; 3] = [16, 32, 64];
const KERNELS: [usize; 3] = [7, 5, 3];

impl ConvSignalExtractor {
    pub fn new(channels: [usize; 3], rng: &mut impl Rng) -> Self {
        let mut conv1 = Conv1dLayer::zeros(1, channels[0], KERNELS[0]);
        let mut conv2 = Conv1dLayer::zeros(channels[0], channels[1], KERNELS[1]);
        let mut conv3 = Conv1dLayer::zeros(channels[1], channels[2], KERNELS[2]);
        conv1.init(rng);
        conv2.init(rng);
        conv3.init(rng);
        ConvSignalExtractor {
            conv1,
            conv2,
            conv3,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.conv3.out_ch
    }

    /// Shortest input the stack accepts (every stage must keep at least one
    /// sample alive).
    pub fn min_input_len(&self) -> usize {
        // Walk the required lengths backwards through conv3, pool, conv2,
        // pool, conv1.
        let need3 = self.conv3.kernel; // conv3 output >= 1
        let need_p2 = need3 * 2; // pool halves (floor)
        let need2 = need_p2 + self.conv2.kernel - 1;
        let need_p1 = need2 * 2;
        need_p1 + self.conv1.kernel - 1
    }

    pub fn forward(&self, signal: &[f64]) -> Result<(Vec<f64>, ConvTrace)> {
        if signal.len() < self.min_input_len() {
            return Err(Error::Config(format!(
                "signal of {} samples is shorter than the extractor's receptive field ({})",
                signal.len(),
                self.min_input_len()
            )));
        }
        let input = Channels::from_signal(signal);
        let mut z1 = self.conv1.forward(&input);
        let z1_saved = z1.clone();
        relu_inplace(&mut z1);
        let (p1, arg1) = max_pool2(&z1);
        let mut z2 = self.conv2.forward(&p1);
        let z2_saved = z2.clone();
        relu_inplace(&mut z2);
        let (p2, arg2) = max_pool2(&z2);
        let z3 = self.conv3.forward(&p2);
        let inv_t = 1.0 / z3.len as f64;
        let latent: Vec<f64> = (0..z3.ch)
            .map(|c| z3.channel(c).iter().sum::<f64>() * inv_t)
            .collect();
        Ok((
            latent,
            ConvTrace {
                input,
                z1: z1_saved,
                p1,
                arg1,
                z2: z2_saved,
                p2,
                arg2,
                z3_len: z3.len,
            },
        ))
    }

    /// Latent code only.
    pub fn extract(&self, signal: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(signal)?.0)
    }

    pub fn backward(&self, trace: &ConvTrace, dlatent: &[f64]) -> Result<ConvExtractorGrads> {
        if dlatent.len() != self.conv3.out_ch {
            return Err(Error::shape(
                "conv extractor grad",
                self.conv3.out_ch,
                dlatent.len(),
            ));
        }
        let mut grads = ConvExtractorGrads {
            layers: [
                Conv1dGrads::zeros(&self.conv1),
                Conv1dGrads::zeros(&self.conv2),
                Conv1dGrads::zeros(&self.conv3),
            ],
        };
        // Global average: each time step receives dlatent/T.
        let inv_t = 1.0 / trace.z3_len as f64;
        let mut dz3 = Channels::zeros(self.conv3.out_ch, trace.z3_len);
        for c in 0..self.conv3.out_ch {
            let g = dlatent[c] * inv_t;
            dz3.channel_mut(c).fill(g);
        }
        let mut dp2 = self.conv3.backward(&trace.p2, &dz3, &mut grads.layers[2]);
        // Pool 2 -> relu 2.
        let mut dz2 = Channels::zeros(trace.z2.ch, trace.z2.len);
        unpool_into(&dp2, &trace.arg2, &mut dz2);
        dp2.data.clear();
        relu_backward_inplace(&trace.z2, &mut dz2);
        let mut dp1 = self.conv2.backward(&trace.p1, &dz2, &mut grads.layers[1]);
        // Pool 1 -> relu 1.
        let mut dz1 = Channels::zeros(trace.z1.ch, trace.z1.len);
        unpool_into(&dp1, &trace.arg1, &mut dz1);
        dp1.data.clear();
        relu_backward_inplace(&trace.z1, &mut dz1);
        let _ = self
            .conv1
            .backward(&trace.input, &dz1, &mut grads.layers[0]);
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count() + self.conv3.param_count()
    }
}

fn unpool_into(dpooled: &Channels, argmax: &[u8], dz: &mut Channels) {
    for c in 0..dpooled.ch {
        let src = dpooled.channel(c);
        let out_len = dpooled.len;
        let dst = dz.channel_mut(c);
        for t in 0..out_len {
            dst[2 * t + argmax[c * out_len + t] as usize] = src[t];
        }
    }
}

fn relu_backward_inplace(z: &Channels, dz: &mut Channels) {
    for (g, &zv) in dz.data.iter_mut().zip(&z.data) {
        if zv <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_extractor(seed: u64) -> ConvSignalExtractor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ConvSignalExtractor::new([4, 6, 8], &mut rng)
    }

    #[test]
    fn zero_signal_with_zero_bias_gives_zero_latent() {
        let mut ex = small_extractor(1);
        ex.conv1.bias.fill(0.0);
        ex.conv2.bias.fill(0.0);
        ex.conv3.bias.fill(0.0);
        let latent = ex.extract(&vec![0.0; 128]).unwrap();
        assert!(latent.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn latent_is_deterministic_and_fixed_width() {
        let ex = small_extractor(2);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        use rand::Rng;
        let sig: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = ex.extract(&sig).unwrap();
        let b = ex.extract(&sig).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let longer = ex.extract(&vec![0.5; 4096]).unwrap();
        assert_eq!(longer.len(), 8);
    }

    #[test]
    fn too_short_signal_is_a_config_error() {
        let ex = small_extractor(3);
        let min = ex.min_input_len();
        assert!(ex.extract(&vec![0.0; min - 1]).is_err());
        assert!(ex.extract(&vec![0.0; min]).is_ok());
    }

    #[test]
    fn default_channels_give_latent_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ex = ConvSignalExtractor::new(DEFAULT_CONV_CHANNELS, &mut rng);
        assert_eq!(ex.output_dim(), 64);
        assert_eq!(ex.min_input_len(), 26);
    }

    #[test]
    fn conv_forward_matches_direct_sum() {
        let mut ex = small_extractor(5);
        ex.conv1 = Conv1dLayer::zeros(1, 2, 7);
        for (i, w) in ex.conv1.weights.iter_mut().enumerate() {
            *w = 0.1 * (i as f64 + 1.0);
        }
        ex.conv1.bias = vec![0.5, -0.25];
        let sig: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
        let x = Channels::from_signal(&sig);
        let out = ex.conv1.forward(&x);
        for o in 0..2 {
            for t in 0..(32 - 6) {
                let mut acc = ex.conv1.bias[o];
                for k in 0..7 {
                    acc += ex.conv1.w(o, 0, k) * sig[t + k];
                }
                assert!((out.channel(o)[t] - acc).abs() < 1e-12);
            }
        }
    }
}
