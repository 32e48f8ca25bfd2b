//! Objective spectral metrics.
//!
//! - **LSD**: per frame, the RMS over bins of `log10 P_ref - log10 P_est`
//!   (power floored at `epsilon`), averaged over frames.
//! - **MRSTFT**: at `n_fft` 512, 1024 and 2048 (hop `n_fft/4`), the sum of
//!   spectral convergence `||R| - |E||_F / ||R||_F` and mean absolute
//!   log-magnitude difference `mean |ln max(|R|, 1e-7) - ln max(|E|, 1e-7)|`,
//!   each with weight 1.
//! - **Mel L1**: mean absolute difference of `ln max(fb · |X|, 1e-7)` with a
//!   128-band, full-band HTK filterbank at `n_fft` 2048 / hop 512. Because the
//!   filterbank is applied to magnitudes, scaling the estimate by `g` shifts
//!   every unfloored value by exactly `ln g`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refiner::CrossoverSpec;
use crate::signal::{mel_filterbank, stft, Waveform};

/// Floor for magnitudes entering a natural log.
pub const LOG_MAG_FLOOR: f64 = 1e-7;
pub const MRSTFT_RESOLUTIONS: [usize; 3] = [512, 1024, 2048];
pub const MEL_L1_BANDS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsdConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub epsilon: f64,
}

impl Default for LsdConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            epsilon: 1e-10,
        }
    }
}

fn check_pair(reference: &Waveform, estimate: &Waveform) -> Result<()> {
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(Error::RateMismatch {
            left: reference.sample_rate(),
            right: estimate.sample_rate(),
        });
    }
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: estimate.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(())
}

/// Log-spectral distance in log10-power units.
pub fn lsd(reference: &Waveform, estimate: &Waveform, cfg: &LsdConfig) -> Result<f64> {
    check_pair(reference, estimate)?;
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "LSD epsilon must be positive, got {}",
            cfg.epsilon
        )));
    }
    let p_ref = stft(reference, cfg.n_fft, cfg.hop)?.power();
    let p_est = stft(estimate, cfg.n_fft, cfg.hop)?.power();
    let eps = cfg.epsilon;
    let per_frame = p_ref.rows().into_iter().zip(p_est.rows()).map(|(r, e)| {
        let mean_sq = r
            .iter()
            .zip(e.iter())
            .map(|(&a, &b)| (a.max(eps).log10() - b.max(eps).log10()).powi(2))
            .sum::<f64>()
            / r.len() as f64;
        mean_sq.sqrt()
    });
    let n_frames = p_ref.nrows();
    Ok(per_frame.sum::<f64>() / n_frames as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MrstftTerm {
    pub n_fft: usize,
    pub spectral_convergence: f64,
    pub log_magnitude: f64,
}

/// Both terms at each resolution in [`MRSTFT_RESOLUTIONS`].
pub fn mrstft_terms(reference: &Waveform, estimate: &Waveform) -> Result<Vec<MrstftTerm>> {
    check_pair(reference, estimate)?;
    MRSTFT_RESOLUTIONS
        .iter()
        .map(|&n_fft| {
            let r = stft(reference, n_fft, n_fft / 4)?.magnitude();
            let e = stft(estimate, n_fft, n_fft / 4)?.magnitude();
            let diff: f64 = r.iter().zip(e.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            let norm: f64 = r.iter().map(|a| a * a).sum();
            let spectral_convergence = if diff == 0.0 {
                0.0
            } else {
                (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
            };
            let log_magnitude = r
                .iter()
                .zip(e.iter())
                .map(|(a, b)| (a.max(LOG_MAG_FLOOR).ln() - b.max(LOG_MAG_FLOOR).ln()).abs())
                .sum::<f64>()
                / r.len() as f64;
            Ok(MrstftTerm {
                n_fft,
                spectral_convergence,
                log_magnitude,
            })
        })
        .collect()
}

pub fn mrstft_distance(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    Ok(mrstft_terms(reference, estimate)?
        .iter()
        .map(|t| t.spectral_convergence + t.log_magnitude)
        .sum())
}

fn log_mel_magnitude(w: &Waveform, fb: &Array2<f64>) -> Result<Array2<f64>> {
    let mag = stft(w, 2048, 512)?.magnitude();
    Ok(mag.dot(&fb.t()).mapv(|v| v.max(LOG_MAG_FLOOR).ln()))
}

/// Mean absolute difference of 128-band natural-log mel magnitudes (48 kHz).
pub fn mel_l1(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    if reference.sample_rate() != 48_000 {
        return Err(Error::RateMismatch {
            left: reference.sample_rate(),
            right: 48_000,
        });
    }
    let fb = mel_filterbank(MEL_L1_BANDS, 2048, 48_000, 0.0, 24_000.0)?;
    let a = log_mel_magnitude(reference, &fb)?;
    let b = log_mel_magnitude(estimate, &fb)?;
    Ok((&a - &b).mapv(f64::abs).mean().unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub lsd: f64,
    pub mrstft: f64,
    pub mel_l1: f64,
}

pub fn evaluate(reference: &Waveform, estimate: &Waveform) -> Result<Metrics> {
    Ok(Metrics {
        lsd: lsd(reference, estimate, &LsdConfig::default())?,
        mrstft: mrstft_distance(reference, estimate)?,
        mel_l1: mel_l1(reference, estimate)?,
    })
}

/// One line of the newline-delimited evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub file: String,
    pub lsd: f64,
    pub mrstft: f64,
    pub mel_l1: f64,
    pub input_rate: u32,
    pub crossover: CrossoverSpec,
}

impl EvalReport {
    pub fn new(file: impl Into<String>, metrics: Metrics, input_rate: u32, crossover: CrossoverSpec) -> Self {
        Self {
            file: file.into(),
            lsd: metrics.lsd,
            mrstft: metrics.mrstft,
            mel_l1: metrics.mel_l1,
            input_rate,
            crossover,
        }
    }
}
