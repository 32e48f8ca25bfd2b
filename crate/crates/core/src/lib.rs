//! Bandwidth extension toolkit.
//!
//! Band-limited audio is resampled to 48 kHz, passed through a mel-conditioned
//! ConvNeXt vocoder that predicts a complex STFT, and the generated signal is
//! merged with the resampled input by a frequency-domain crossover refiner.
//! The degradation pipeline and spectral metrics used for evaluation live
//! alongside.

pub mod error;
pub mod metrics;
pub mod refiner;
pub mod resample;
pub mod signal;
pub mod vocoder;

pub use error::{Error, Result};
pub use refiner::{default_crossover, refine, CrossoverSpec, CrossoverVariant};
pub use resample::{degrade, quantize, resample, DegradeSpec, ResampleMethod, PIPELINE_RATE};
pub use signal::Waveform;
pub use vocoder::{VocoderConfig, VocoderModel};
