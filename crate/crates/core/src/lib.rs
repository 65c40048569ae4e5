//! Silent speech from ultrasound-style frame sequences.
//!
//! A window of 13 grayscale frames is mapped to a 64-band Mel vector by a
//! convolutional network ([`models::net1`]); the resulting spectrogram is
//! refined by a 1-D convolution bank followed by a U-shaped encoder/decoder
//! ([`models::net2`]); audio is recovered with Griffin-Lim phase
//! reconstruction ([`dsp::griffin_lim`]).
//!
//! Everything numeric is built on the small reverse-mode autodiff core in
//! [`tensor`]. The [`dataset`] module aligns frame and audio streams, builds
//! training pairs, and generates a synthetic corpus whose frame-to-audio
//! mapping is known in closed form.

pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod models;
pub mod tensor;

pub use error::{Error, Result};
