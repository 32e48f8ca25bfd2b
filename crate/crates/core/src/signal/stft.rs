use ndarray::Array2;

use super::fft::{irfft, rfft};
use super::{is_power_of_two, Complex64, Waveform};
use crate::error::{Error, Result};

/// Periodic Hann window. At hop `n/4` its square overlap-adds to a constant.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Framed one-sided STFT, `n_frames x (n_fft/2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: Array2<Complex64>,
    n_fft: usize,
    hop: usize,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn new(frames: Array2<Complex64>, n_fft: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if !is_power_of_two(n_fft) {
            return Err(Error::InvalidArgument(format!(
                "n_fft must be a power of two, got {n_fft}"
            )));
        }
        if hop == 0 || hop > n_fft {
            return Err(Error::InvalidArgument(format!(
                "hop must be in 1..={n_fft}, got {hop}"
            )));
        }
        if frames.ncols() != n_fft / 2 + 1 {
            return Err(Error::InvalidArgument(format!(
                "spectrogram has {} bins, n_fft {n_fft} needs {}",
                frames.ncols(),
                n_fft / 2 + 1
            )));
        }
        Ok(Self {
            frames,
            n_fft,
            hop,
            sample_rate,
        })
    }

    pub fn frames(&self) -> &Array2<Complex64> {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn power(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm_sqr())
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }
}

/// Frame count for a centred STFT of `len` samples.
pub(crate) fn frame_count(len: usize, hop: usize) -> usize {
    len / hop + 1
}

// numpy-style "reflect" (edge sample not repeated), folded for short inputs
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Centred STFT with a periodic Hann window.
///
/// The signal is reflect-padded by `n_fft/2` on both sides so that frame `t`
/// is centred on sample `t * hop`.
pub fn stft(w: &Waveform, n_fft: usize, hop: usize) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !is_power_of_two(n_fft) {
        return Err(Error::InvalidArgument(format!(
            "n_fft must be a power of two, got {n_fft}"
        )));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::InvalidArgument(format!(
            "hop must be in 1..={n_fft}, got {hop}"
        )));
    }
    let x = w.samples();
    let pad = (n_fft / 2) as isize;
    let window = hann_window(n_fft);
    let n_frames = frame_count(x.len(), hop);
    let n_bins = n_fft / 2 + 1;
    let mut frames = Array2::zeros((n_frames, n_bins));
    let mut seg = vec![0.0; n_fft];
    for t in 0..n_frames {
        let start = (t * hop) as isize - pad;
        for (i, (s, wv)) in seg.iter_mut().zip(&window).enumerate() {
            *s = x[reflect_index(start + i as isize, x.len())] * wv;
        }
        let bins = rfft(&seg, n_fft)?;
        frames
            .row_mut(t)
            .iter_mut()
            .zip(bins)
            .for_each(|(d, b)| *d = b);
    }
    ComplexSpectrogram::new(frames, n_fft, hop, w.sample_rate())
}

/// Inverse of [`stft`], producing `(n_frames - 1) * hop` samples.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let len = spec.n_frames().saturating_sub(1) * spec.hop();
    istft_with_length(spec, len)
}

/// Weighted overlap-add inverse, trimmed (or zero-padded) to `len` samples.
///
/// Each frame is re-windowed and the sum is divided by the overlap-added
/// squared window, so any hop with a nonvanishing envelope reconstructs.
pub fn istft_with_length(spec: &ComplexSpectrogram, len: usize) -> Result<Waveform> {
    let n_fft = spec.n_fft();
    let hop = spec.hop();
    if spec.n_bins() != n_fft / 2 + 1 {
        return Err(Error::InvalidArgument(format!(
            "spectrogram has {} bins, n_fft {n_fft} needs {}",
            spec.n_bins(),
            n_fft / 2 + 1
        )));
    }
    let n_frames = spec.n_frames();
    if n_frames == 0 {
        return Waveform::zeros(len, spec.sample_rate());
    }
    let window = hann_window(n_fft);
    let total = (n_frames - 1) * hop + n_fft;
    let mut acc = vec![0.0; total];
    let mut env = vec![0.0; total];
    let mut bins = vec![Complex64::new(0.0, 0.0); n_fft / 2 + 1];
    for (t, row) in spec.frames().rows().into_iter().enumerate() {
        bins.iter_mut().zip(row).for_each(|(d, s)| *d = *s);
        let frame = irfft(&bins, n_fft)?;
        let off = t * hop;
        for i in 0..n_fft {
            acc[off + i] += frame[i] * window[i];
            env[off + i] += window[i] * window[i];
        }
    }
    let pad = n_fft / 2;
    let out = (0..len)
        .map(|i| {
            let j = i + pad;
            if j < total && env[j] > 1e-11 {
                acc[j] / env[j]
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(out, spec.sample_rate())
}
