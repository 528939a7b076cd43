//! Emotional end-to-end speech synthesis: a Tacotron-style encoder/decoder with
//! emotion conditioning, monotonic attention, semi-teacher-forced training,
//! context-vector feedback into the attention RNN and a residual bi-GRU in the
//! CBHG encoder. Everything runs on a small reverse-mode autodiff core.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common instantiations.

pub mod autodiff;
pub mod corpus;
pub mod diagnostics;
pub mod dsp;
pub mod error;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Waveform64 = dsp::Waveform<f64>;
pub type Waveform32 = dsp::Waveform<f32>;
