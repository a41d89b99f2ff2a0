//! Crate-wide error type.
//!
//! Variants are grouped by what went wrong rather than by module, so the
//! CLI can map them onto its exit classes (configuration, data, numeric)
//! without inspecting message strings.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Configuration and argument problems.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid sampling rate {rate_hz} Hz: {reason}")]
    InvalidRate { rate_hz: f64, reason: &'static str },
    #[error("cutoff {cutoff_hz} Hz out of range for Nyquist {nyquist_hz} Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("invalid filter order {order}: {reason}")]
    InvalidOrder { order: usize, reason: &'static str },
    #[error("resampling ratio {from_hz} Hz -> {to_hz} Hz has no small rational approximation")]
    UnsupportedRatio { from_hz: f64, to_hz: f64 },

    // Data problems: malformed, degenerate or inconsistent inputs.
    #[error("empty signal: {0}")]
    EmptySignal(&'static str),
    #[error("signal too short in {context}: need {needed} samples, have {got}")]
    SignalTooShort {
        context: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("sampling rate mismatch in {context}: expected {expected_hz} Hz, got {got_hz} Hz")]
    RateMismatch {
        context: &'static str,
        expected_hz: f64,
        got_hz: f64,
    },
    #[error("duplicate channel label {0:?}")]
    DuplicateLabel(String),
    #[error("unknown channel label {0:?}")]
    UnknownLabel(String),
    #[error("non-positive intensity at channel {channel:?}, sample {sample}")]
    NonPositiveIntensity { channel: String, sample: usize },
    #[error("maximum voluntary contraction must be positive, got {0}")]
    NonPositiveMvc(f64),
    #[error("trial windows overlap no data: {0}")]
    EmptyOverlap(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("dataset format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("checksum mismatch for {path}")]
    ChecksumMismatch { path: PathBuf },
    #[error("I/O error on {path}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),

    // Numeric problems: finite inputs are a construction invariant, so these
    // indicate divergence or degeneracy discovered mid-computation.
    #[error("non-finite value in {context} (channel {channel}, sample {sample})")]
    NonFinite {
        context: String,
        channel: usize,
        sample: usize,
    },
    #[error("constant signal in {0}: variance is zero")]
    ConstantSignal(String),
    #[error("numeric failure in {context}: {reason}")]
    Numeric { context: &'static str, reason: String },
}

impl Error {
    /// Coarse classification used by the CLI for exit codes.
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Config(_) | InvalidRate { .. } | CutoffOutOfRange { .. } | InvalidOrder { .. }
            | UnsupportedRatio { .. } => ErrorClass::Config,
            NonFinite { .. } | ConstantSignal(_) | Numeric { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}
