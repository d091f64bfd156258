//! Networks: dense layers, the conditioned sine activation, and the
//! composer MLP with exact hand-derived gradients.

mod activation;
mod composer;
mod dense;

pub use activation::{activate_slice, incode_activation, ActivationParams, EffectiveParams};
pub use composer::{
    ComposerGradients, ComposerNetwork, ForwardTrace, LayerGrads, DEFAULT_DEPTH, DEFAULT_WIDTH,
};
pub use dense::{siren_init, DenseLayer};
