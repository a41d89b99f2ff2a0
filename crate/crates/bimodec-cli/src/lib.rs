//! Command-line front end for the bimodal grip-force decoding library:
//! session synthesis, signal conditioning, feature export, decoder
//! training/evaluation, sensitivity analysis, latency benchmarking, and
//! report aggregation. The pieces are exposed as a library so integration
//! tests can drive full analyses in-process.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod plot;
pub mod runner;
