//! Signal conditioning: latent-code extraction and the harmonizer MLP that
//! turns a latent code into the raw activation quadruple.

mod conv;
mod harmonizer;
mod mfcc;

pub use conv::{
    Conv1dLayer, ConvExtractorGrads, ConvSignalExtractor, ConvTrace, DEFAULT_CONV_CHANNELS,
};
pub use harmonizer::{
    layer_norm, silu, silu_derivative, HarmonizerGradients, HarmonizerLayer, HarmonizerLayerGrads,
    HarmonizerNetwork, HarmonizerProfile, HarmonizerTrace, LayerNormParams, LAYER_NORM_EPS,
};
pub use mfcc::{mfcc_extract, mfcc_per_frame, MfccConfig};

use crate::Result;

/// How the latent code is produced from the target signal.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentExtractor {
    /// Trainable convolutional stack over a flattened sample sequence.
    ConvSignal(ConvSignalExtractor),
    /// Fixed MFCC features of an audio signal.
    Mfcc {
        config: MfccConfig,
        sample_rate: u32,
        output_dim: usize,
    },
}

impl LatentExtractor {
    pub fn output_dim(&self) -> usize {
        match self {
            LatentExtractor::ConvSignal(ex) => ex.output_dim(),
            LatentExtractor::Mfcc { output_dim, .. } => *output_dim,
        }
    }

    /// Whether gradients flow into the extractor.
    pub fn is_trainable(&self) -> bool {
        matches!(self, LatentExtractor::ConvSignal(_))
    }

    /// Latent code without a backward trace.
    pub fn extract(&self, signal: &[f64]) -> Result<Vec<f64>> {
        match self {
            LatentExtractor::ConvSignal(ex) => ex.extract(signal),
            LatentExtractor::Mfcc {
                config,
                sample_rate,
                output_dim,
            } => mfcc_extract(signal, *sample_rate, config, *output_dim),
        }
    }
}
