//! Continuous bimanual grip-force decoding from EEG and fNIRS.
//!
//! The crate covers the whole offline pipeline: synthetic session generation,
//! per-modality preprocessing (filtering, artifact rejection, optical-density
//! conversion), Hilbert band features on a shared 12.5 Hz clock, lag-window
//! design matrices, a Lasso decoder and a conv+attention decoder on a minimal
//! reverse-mode autodiff tape, FVAF evaluation with hand-specificity and
//! time-shuffle sensitivity analysis, plus dataset/checkpoint file formats.
//!
//! All numeric kernels are generic over [`num::Scalar`] (`f32`/`f64`); the
//! aliases at the crate root pin `f64`, which every shipped code path uses.

pub mod decode;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod num;
pub mod pipeline;
pub mod resample;
pub mod signal;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use num::Scalar;

/// Double-precision time series, the working type of the pipeline.
pub type TimeSeries = signal::TimeSeries<f64>;
/// Double-precision trial epoch.
pub type TrialEpoch = signal::TrialEpoch<f64>;
