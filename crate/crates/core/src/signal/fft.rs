use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::{Complex64, Waveform};
use crate::error::{Error, Result};

thread_local! {
    // Plans hold immutable twiddle tables; the planner itself stays per-thread.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

fn check_transform_size(transform_size: usize) -> Result<()> {
    if transform_size == 0 || !transform_size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "transform size must be even and nonzero, got {transform_size}"
        )));
    }
    Ok(())
}

/// One-sided DFT of `signal`, zero-padded to `transform_size`.
///
/// Returns `transform_size / 2 + 1` bins; the DC and Nyquist bins carry an
/// exactly-zero imaginary part.
pub fn rfft(signal: &[f64], transform_size: usize) -> Result<Vec<Complex64>> {
    check_transform_size(transform_size)?;
    if signal.len() > transform_size {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples does not fit transform size {transform_size}",
            signal.len()
        )));
    }
    let mut buf: Vec<Complex64> = signal
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(transform_size)
        .collect();
    forward_plan(transform_size).process(&mut buf);
    buf.truncate(transform_size / 2 + 1);
    buf[0].im = 0.0;
    buf[transform_size / 2].im = 0.0;
    Ok(buf)
}

/// Inverse of [`rfft`]: rebuilds the Hermitian-symmetric spectrum and returns
/// `transform_size` real samples (scaled by `1/N`).
pub fn irfft(bins: &[Complex64], transform_size: usize) -> Result<Vec<f64>> {
    check_transform_size(transform_size)?;
    let half = transform_size / 2;
    if bins.len() != half + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} bins for transform size {transform_size}, got {}",
            half + 1,
            bins.len()
        )));
    }
    let mut buf = Vec::with_capacity(transform_size);
    buf.push(Complex64::new(bins[0].re, 0.0));
    buf.extend_from_slice(&bins[1..half]);
    buf.push(Complex64::new(bins[half].re, 0.0));
    buf.extend(bins[1..half].iter().rev().map(|c| c.conj()));
    inverse_plan(transform_size).process(&mut buf);
    let scale = 1.0 / transform_size as f64;
    Ok(buf.into_iter().map(|c| c.re * scale).collect())
}

/// Whole-signal one-sided spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrum {
    bins: Vec<Complex64>,
    transform_size: usize,
    sample_rate: u32,
}

impl RealSpectrum {
    pub fn new(bins: Vec<Complex64>, transform_size: usize, sample_rate: u32) -> Result<Self> {
        check_transform_size(transform_size)?;
        if bins.len() != transform_size / 2 + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} bins for transform size {transform_size}, got {}",
                transform_size / 2 + 1,
                bins.len()
            )));
        }
        if bins[0].im != 0.0 || bins[transform_size / 2].im != 0.0 {
            return Err(Error::InvalidArgument(
                "DC and Nyquist bins must be real".into(),
            ));
        }
        Ok(Self {
            bins,
            transform_size,
            sample_rate,
        })
    }

    pub fn from_waveform(w: &Waveform, transform_size: usize) -> Result<Self> {
        Ok(Self {
            bins: rfft(w.samples(), transform_size)?,
            transform_size,
            sample_rate: w.sample_rate(),
        })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn transform_size(&self) -> usize {
        self.transform_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Centre frequency of bin `k`: `k * sample_rate / transform_size`.
    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.transform_size as f64
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.bins.len()).map(|k| self.bin_freq(k)).collect()
    }

    /// Inverse transform, truncated to `len` samples.
    pub fn to_waveform(&self, len: usize) -> Result<Waveform> {
        let mut samples = irfft(&self.bins, self.transform_size)?;
        samples.resize(len, 0.0);
        Waveform::new(samples, self.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
        (0..=n / 2)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                        Complex64::new(v * ang.cos(), v * ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dc_only_signal() {
        let bins = rfft(&[1.0, 1.0, 1.0, 1.0], 4).unwrap();
        assert_eq!(bins.len(), 3);
        assert!((bins[0] - Complex64::new(4.0, 0.0)).norm() < 1e-12);
        assert!(bins[1].norm() < 1e-12);
        assert!(bins[2].norm() < 1e-12);
    }

    #[test]
    fn impulse_is_flat() {
        let bins = rfft(&[1.0, 0.0, 0.0, 0.0], 4).unwrap();
        let oracle = naive_dft(&[1.0, 0.0, 0.0, 0.0], 4);
        for (b, o) in bins.iter().zip(&oracle) {
            assert!((b - o).norm() < 1e-12);
            assert!((b - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft_with_padding() {
        let x: Vec<f64> = (0..13).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let bins = rfft(&x, 32).unwrap();
        for (b, o) in bins.iter().zip(naive_dft(&x, 32)) {
            assert!((b - o).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(rfft(&[1.0], 0).is_err());
        assert!(rfft(&[1.0, 2.0, 3.0], 3).is_err());
        assert!(rfft(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(irfft(&[Complex64::new(0.0, 0.0); 4], 8).is_err());
    }

    #[test]
    fn non_power_of_two_round_trip() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = irfft(&rfft(&x, 30).unwrap(), 30).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_bin_freqs() {
        let w = Waveform::new(vec![0.0; 8], 48_000).unwrap();
        let s = RealSpectrum::from_waveform(&w, 8).unwrap();
        assert_eq!(s.bin_freqs(), vec![0.0, 6000.0, 12000.0, 18000.0, 24000.0]);
    }
}
