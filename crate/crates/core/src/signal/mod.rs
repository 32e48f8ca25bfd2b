//! Signal containers and the transform machinery shared by the rest of the crate.
//!
//! All signal-domain arithmetic is `f64`; only the vocoder drops to `f32`.

mod fft;
mod mel;
mod stft;

pub use fft::{irfft, rfft, RealSpectrum};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelConfig, MelSpectrogram};
pub use stft::{hann_window, istft, istft_with_length, stft, ComplexSpectrogram};

pub use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Mono sample buffer tagged with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to_len(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

pub(crate) fn is_power_of_two(n: usize) -> bool {
    n >= 2 && n.is_power_of_two()
}
