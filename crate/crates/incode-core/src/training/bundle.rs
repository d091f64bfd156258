//! The trainable model bundle: composer plus its conditioning path, and the
//! flattening used by the optimizer.

use super::params::ParamLayout;
use crate::conditioning::{
    ConvExtractorGrads, ConvTrace, HarmonizerGradients, HarmonizerNetwork, HarmonizerTrace,
    LatentExtractor,
};
use crate::nn::{ActivationParams, ComposerGradients, ComposerNetwork};
use crate::{Error, Result};

/// How the activation quadruple is produced each step.
#[derive(Debug, Clone)]
pub enum Conditioning {
    /// Latent extractor feeding the harmonizer; both may be trained.
    Learned {
        harmonizer: HarmonizerNetwork,
        extractor: LatentExtractor,
    },
    /// Effective parameters pinned for the whole run. `(1, 1, 0, 0)` is the
    /// plain sine baseline.
    Frozen(ActivationParams),
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub composer: ComposerNetwork,
    pub conditioning: Conditioning,
}

impl ModelBundle {
    pub fn new(composer: ComposerNetwork, conditioning: Conditioning) -> Result<Self> {
        if let Conditioning::Learned {
            harmonizer,
            extractor,
        } = &conditioning
        {
            if harmonizer.input_dim() != extractor.output_dim() {
                return Err(Error::shape(
                    "harmonizer input vs latent size",
                    extractor.output_dim(),
                    harmonizer.input_dim(),
                ));
            }
        }
        Ok(ModelBundle {
            composer,
            conditioning,
        })
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self.conditioning, Conditioning::Frozen(_))
    }

    /// One conditioning evaluation: extractor (or cached latent) through the
    /// harmonizer to the activation quadruple, keeping whatever traces the
    /// backward pass will need.
    pub fn conditioning_forward(
        &self,
        input: Option<&[f64]>,
        cached_latent: Option<&[f64]>,
    ) -> Result<ConditioningForward> {
        match &self.conditioning {
            Conditioning::Frozen(p) => Ok(ConditioningForward {
                params: *p,
                harmonizer_trace: None,
                conv_trace: None,
            }),
            Conditioning::Learned {
                harmonizer,
                extractor,
            } => {
                let (latent, conv_trace) = match (cached_latent, extractor) {
                    (Some(cached), _) => (cached.to_vec(), None),
                    (None, LatentExtractor::ConvSignal(conv)) => {
                        let input = input.ok_or_else(|| {
                            Error::Config(
                                "learned conditioning requires a conditioning input".into(),
                            )
                        })?;
                        let (latent, trace) = conv.forward(input)?;
                        (latent, Some(trace))
                    }
                    (None, other) => {
                        let input = input.ok_or_else(|| {
                            Error::Config(
                                "learned conditioning requires a conditioning input".into(),
                            )
                        })?;
                        (other.extract(input)?, None)
                    }
                };
                let (raw, trace) = harmonizer.forward(&latent)?;
                Ok(ConditioningForward {
                    params: ActivationParams::from_raw(raw),
                    harmonizer_trace: Some(trace),
                    conv_trace,
                })
            }
        }
    }

    /// Propagates dL/d(raw quadruple) back through the harmonizer and, when
    /// present and trainable, the extractor.
    pub fn conditioning_backward(
        &self,
        fwd: &ConditioningForward,
        raw_grads: [f64; 4],
    ) -> Result<(Option<HarmonizerGradients>, Option<ConvExtractorGrads>)> {
        match (&self.conditioning, &fwd.harmonizer_trace) {
            (
                Conditioning::Learned {
                    harmonizer,
                    extractor,
                },
                Some(trace),
            ) => {
                let hg = harmonizer.backward(trace, raw_grads)?;
                let cg = match (extractor, &fwd.conv_trace) {
                    (LatentExtractor::ConvSignal(conv), Some(ct)) => {
                        Some(conv.backward(ct, &hg.input)?)
                    }
                    _ => None,
                };
                Ok((Some(hg), cg))
            }
            _ => Ok((None, None)),
        }
    }

    /// Current activation quadruple for inference or checkpointing.
    pub fn activation_params(&self, input: Option<&[f64]>) -> Result<ActivationParams> {
        Ok(self.conditioning_forward(input, None)?.params)
    }

    /// Named blocks in flattening order.
    pub fn param_layout(&self) -> ParamLayout {
        let mut blocks = Vec::new();
        for (i, layer) in self.composer.layers().iter().enumerate() {
            blocks.push((
                format!("composer.layer{i}.weights"),
                layer.fan_out() * layer.fan_in(),
            ));
            blocks.push((format!("composer.layer{i}.bias"), layer.fan_out()));
        }
        if let Conditioning::Learned {
            harmonizer,
            extractor,
        } = &self.conditioning
        {
            for (i, layer) in harmonizer.layers().iter().enumerate() {
                blocks.push((
                    format!("harmonizer.layer{i}.weights"),
                    layer.dense.fan_out() * layer.dense.fan_in(),
                ));
                blocks.push((format!("harmonizer.layer{i}.bias"), layer.dense.fan_out()));
                if layer.norm.is_some() {
                    blocks.push((format!("harmonizer.layer{i}.gamma"), layer.dense.fan_out()));
                    blocks.push((format!("harmonizer.layer{i}.beta"), layer.dense.fan_out()));
                }
            }
            if let LatentExtractor::ConvSignal(conv) = extractor {
                for (i, layer) in [&conv.conv1, &conv.conv2, &conv.conv3].iter().enumerate() {
                    blocks.push((
                        format!("extractor.conv{}.weights", i + 1),
                        layer.weights.len(),
                    ));
                    blocks.push((format!("extractor.conv{}.bias", i + 1), layer.bias.len()));
                }
            }
        }
        ParamLayout::from_blocks(blocks)
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in self.composer.layers() {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        if let Conditioning::Learned {
            harmonizer,
            extractor,
        } = &self.conditioning
        {
            for layer in harmonizer.layers() {
                out.extend_from_slice(layer.dense.weights.as_slice());
                out.extend_from_slice(&layer.dense.bias);
                if let Some(norm) = &layer.norm {
                    out.extend_from_slice(&norm.gamma);
                    out.extend_from_slice(&norm.beta);
                }
            }
            if let LatentExtractor::ConvSignal(conv) = extractor {
                for layer in [&conv.conv1, &conv.conv2, &conv.conv3] {
                    out.extend_from_slice(&layer.weights);
                    out.extend_from_slice(&layer.bias);
                }
            }
        }
        out
    }

    pub fn scatter_params(&mut self, flat: &[f64]) {
        let mut pos = 0;
        let mut take = |len: usize| {
            let s = &flat[pos..pos + len];
            pos += len;
            s
        };
        for layer in self.composer.layers_mut() {
            let n = layer.weights.rows() * layer.weights.cols();
            layer.weights.as_mut_slice().copy_from_slice(take(n));
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(take(nb));
        }
        if let Conditioning::Learned {
            harmonizer,
            extractor,
        } = &mut self.conditioning
        {
            for layer in harmonizer.layers_mut() {
                let n = layer.dense.weights.rows() * layer.dense.weights.cols();
                layer.dense.weights.as_mut_slice().copy_from_slice(take(n));
                let nb = layer.dense.bias.len();
                layer.dense.bias.copy_from_slice(take(nb));
                if let Some(norm) = &mut layer.norm {
                    let ng = norm.gamma.len();
                    norm.gamma.copy_from_slice(take(ng));
                    norm.beta.copy_from_slice(take(ng));
                }
            }
            if let LatentExtractor::ConvSignal(conv) = extractor {
                for layer in [&mut conv.conv1, &mut conv.conv2, &mut conv.conv3] {
                    let n = layer.weights.len();
                    layer.weights.copy_from_slice(take(n));
                    let nb = layer.bias.len();
                    layer.bias.copy_from_slice(take(nb));
                }
            }
        }
        assert_eq!(pos, flat.len(), "flat parameter vector length mismatch");
    }
}

/// Traces produced by one conditioning evaluation.
#[derive(Debug, Clone)]
pub struct ConditioningForward {
    pub params: ActivationParams,
    pub harmonizer_trace: Option<HarmonizerTrace>,
    pub conv_trace: Option<ConvTrace>,
}

/// Flattens gradients in the exact order of [`ModelBundle::flatten_params`].
/// The optional parts must match the bundle's conditioning mode.
pub fn flatten_grads(
    composer: &ComposerGradients,
    harmonizer: Option<&HarmonizerGradients>,
    extractor: Option<&ConvExtractorGrads>,
) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &composer.layers {
        out.extend_from_slice(layer.weights.as_slice());
        out.extend_from_slice(&layer.bias);
    }
    if let Some(h) = harmonizer {
        for layer in &h.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
            if let Some(gamma) = &layer.gamma {
                out.extend_from_slice(gamma);
                out.extend_from_slice(layer.beta.as_ref().unwrap());
            }
        }
    }
    if let Some(c) = extractor {
        for layer in &c.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
    }
    out
}
