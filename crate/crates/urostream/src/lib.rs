//! Streaming single-layer transformer toolkit for real-time multi-label
//! classification of a scalar bladder-pressure signal.
//!
//! The pipeline, sample by sample:
//!
//! 1. [`features`] keeps the latest 512 samples in a FIFO, runs a 5-level
//!    lifting wavelet transform ([`wavelet`]), retains the newest
//!    coefficient per subband, and assembles a 16-dimensional feature
//!    vector with ratio features and z-score normalization.
//! 2. [`forward`] classifies each 8-sample segment with a single-layer
//!    transformer; [`model::MemoryBank`] caches mean-pooled context vectors
//!    from previous segments so streaming attention spans ~6.4 s of history
//!    at a fixed cost.
//! 3. [`engine`] drives ingestion end to end with a hard causality
//!    contract: one prediction per completed segment, state bounded
//!    regardless of trace length.
//!
//! [`train`] provides explicit-gradient training with AdamW, [`synth`]
//! generates labeled pressure traces standing in for clinical data,
//! [`quant`] adds weight-only int8 quantization, and [`cost`] accounts for
//! per-segment FLOPs, memory footprint, and measured latency.
//!
//! See the book under `book/` for a guided tour, and the `urostream` binary
//! for the command-line pipeline (`gen`, `train`, `eval`, `stream`,
//! `bench`).

pub mod checkpoint;
pub mod cost;
pub mod engine;
pub mod error;
pub mod features;
pub mod forward;
pub mod label;
pub mod model;
pub mod quant;
pub mod runconfig;
pub mod synth;
pub mod train;
pub mod wavelet;

pub use error::{Error, Result};
pub use label::{Label, LabelSet};
