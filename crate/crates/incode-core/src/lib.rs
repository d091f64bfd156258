//! Implicit neural representation fitting with conditioned sinusoidal
//! activations.
//!
//! The composer network maps coordinates to signal values through hidden
//! layers activated by `a*sin(b*w0*z + c) + d`; a harmonizer MLP predicts
//! the shared `(a, b, c, d)` quadruple each step from a latent code derived
//! from the target signal. Gradients are exact and hand-derived for this
//! fixed architecture. On top of that sit task pipelines for signal
//! representation and inverse problems (denoising, super-resolution,
//! inpainting, sparse-view CT), the plain-sine baseline being the frozen
//! `(1, 1, 0, 0)` special case.

pub mod checkpoint;
pub mod conditioning;
pub mod ct;
mod error;
pub mod mat;
pub mod nn;
pub mod signals;
pub mod training;

pub use error::{Error, Result};
pub use mat::Mat;
