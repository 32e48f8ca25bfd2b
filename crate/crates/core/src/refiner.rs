//! Frequency-domain crossover refiner.
//!
//! The resampled input `y` anchors the low band and the generated signal
//! supplies the high band. Both are transformed with one whole-signal real FFT
//! and mixed per bin as `(1 - M(f)) Y(f) + M(f) X(f)`, where `M` is a
//! smoothstep ramp across `[f_start, f_end]`. Two ablation variants swap in a
//! brickwall step or Butterworth-shaped magnitude weights.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Complex64, RealSpectrum, Waveform};

/// Clips longer than this are refined in overlapping chunks.
pub const CHUNK_LEN: usize = 1 << 20;
/// Overlap between consecutive chunks, blended with a linear crossfade.
pub const CHUNK_CROSSFADE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverVariant {
    /// `3t^2 - 2t^3` ramp whose two weights always sum to one.
    SmoothstepLr,
    /// Hard step at the midpoint of the transition.
    NaiveBrickwall,
    /// Zero-phase 4th-order Butterworth magnitude pair; sums to `sqrt(2)` at
    /// the cutoff.
    Butterworth4,
}

impl fmt::Display for CrossoverVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrossoverVariant::SmoothstepLr => "smoothstep-lr",
            CrossoverVariant::NaiveBrickwall => "naive-brickwall",
            CrossoverVariant::Butterworth4 => "butterworth4",
        })
    }
}

impl FromStr for CrossoverVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smoothstep-lr" | "smoothstep" | "lr" => Ok(CrossoverVariant::SmoothstepLr),
            "naive-brickwall" | "brickwall" => Ok(CrossoverVariant::NaiveBrickwall),
            "butterworth4" | "butterworth" => Ok(CrossoverVariant::Butterworth4),
            other => Err(Error::InvalidArgument(format!(
                "unknown crossover variant `{other}` (expected smoothstep-lr, brickwall or butterworth4)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverSpec {
    pub f_start: f64,
    pub f_end: f64,
    pub variant: CrossoverVariant,
}

impl CrossoverSpec {
    pub fn new(f_start: f64, f_end: f64, variant: CrossoverVariant) -> Result<Self> {
        let spec = Self {
            f_start,
            f_end,
            variant,
        };
        spec.check_shape()?;
        Ok(spec)
    }

    fn check_shape(&self) -> Result<()> {
        if !(self.f_start.is_finite() && self.f_end.is_finite() && self.f_start > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "crossover edges must be finite with f_start > 0, got {}..{}",
                self.f_start, self.f_end
            )));
        }
        let ordered = match self.variant {
            CrossoverVariant::NaiveBrickwall => self.f_start <= self.f_end,
            _ => self.f_start < self.f_end,
        };
        if !ordered {
            return Err(Error::InvalidArgument(format!(
                "crossover needs f_start < f_end, got {}..{}",
                self.f_start, self.f_end
            )));
        }
        Ok(())
    }

    /// Checks the shape invariants plus `f_end <= sample_rate / 2`.
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.check_shape()?;
        let nyquist = f64::from(sample_rate) / 2.0;
        if self.f_end > nyquist {
            return Err(Error::InvalidArgument(format!(
                "crossover end {} Hz is above Nyquist {nyquist} Hz",
                self.f_end
            )));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> f64 {
        0.5 * (self.f_start + self.f_end)
    }

    /// `(low, high)` weights applied to the anchor and the generated signal.
    pub fn weights(&self, f: f64) -> (f64, f64) {
        match self.variant {
            CrossoverVariant::SmoothstepLr => {
                let m = smoothstep(f, self.f_start, self.f_end);
                (1.0 - m, m)
            }
            CrossoverVariant::NaiveBrickwall => {
                if f < self.cutoff() {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            CrossoverVariant::Butterworth4 => {
                let r4 = (f / self.cutoff()).powi(4);
                let denom = (1.0 + r4 * r4).sqrt();
                (1.0 / denom, r4 / denom)
            }
        }
    }

    /// The high-band weight `M(f)`.
    pub fn mask_value(&self, f: f64) -> f64 {
        self.weights(f).1
    }
}

fn smoothstep(f: f64, f_start: f64, f_end: f64) -> f64 {
    if f < f_start {
        0.0
    } else if f > f_end {
        1.0
    } else {
        let t = (f - f_start) / (f_end - f_start);
        t * t * (3.0 - 2.0 * t)
    }
}

/// `M(f)` for every frequency in `bin_freqs` (which must be ascending).
pub fn crossover_mask(spec: &CrossoverSpec, bin_freqs: &[f64]) -> Result<Vec<f64>> {
    spec.check_shape()?;
    if bin_freqs.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument(
            "bin frequencies must be sorted ascending".into(),
        ));
    }
    Ok(bin_freqs.iter().map(|&f| spec.mask_value(f)).collect())
}

/// Crossover placed just below the input Nyquist: the ramp spans the top 10%
/// of `[0, input_rate / 2]`.
pub fn default_crossover(input_rate: u32) -> Result<CrossoverSpec> {
    if !(8_000..=48_000).contains(&input_rate) {
        return Err(Error::InvalidArgument(format!(
            "input rate must be 8000..=48000 Hz, got {input_rate}"
        )));
    }
    let f_c = f64::from(input_rate) / 2.0;
    let width = 0.1 * f_c;
    CrossoverSpec::new(f_c - width, f_c, CrossoverVariant::SmoothstepLr)
}

/// Per-bin merge of the anchor spectrum `y` with the generated spectrum `x`.
///
/// Bins with a zero high weight copy `y` verbatim and bins with a zero low
/// weight copy `x` verbatim.
pub fn refine_spectrum(
    y: &RealSpectrum,
    x: &RealSpectrum,
    spec: &CrossoverSpec,
) -> Result<RealSpectrum> {
    if y.sample_rate() != x.sample_rate() {
        return Err(Error::RateMismatch {
            left: y.sample_rate(),
            right: x.sample_rate(),
        });
    }
    if y.transform_size() != x.transform_size() {
        return Err(Error::LengthMismatch {
            left: y.transform_size(),
            right: x.transform_size(),
        });
    }
    spec.validate(y.sample_rate())?;
    let bins: Vec<Complex64> = y
        .bins()
        .iter()
        .zip(x.bins())
        .enumerate()
        .map(|(k, (&yb, &xb))| match spec.weights(y.bin_freq(k)) {
            (_, 0.0) => yb,
            (0.0, _) => xb,
            (l, h) => yb * l + xb * h,
        })
        .collect();
    RealSpectrum::new(bins, y.transform_size(), y.sample_rate())
}

fn refine_block(y: &[f64], x: &[f64], rate: u32, spec: &CrossoverSpec) -> Result<Vec<f64>> {
    let n = y.len() + y.len() % 2;
    let ys = RealSpectrum::new(crate::signal::rfft(y, n)?, n, rate)?;
    let xs = RealSpectrum::new(crate::signal::rfft(x, n)?, n, rate)?;
    let merged = refine_spectrum(&ys, &xs, spec)?;
    let mut out = crate::signal::irfft(merged.bins(), n)?;
    out.truncate(y.len());
    Ok(out)
}

pub(crate) fn refine_chunked(
    y: &Waveform,
    x_gen: &Waveform,
    spec: &CrossoverSpec,
    chunk: usize,
    crossfade: usize,
) -> Result<Waveform> {
    if y.len() != x_gen.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: x_gen.len(),
        });
    }
    if y.sample_rate() != x_gen.sample_rate() {
        return Err(Error::RateMismatch {
            left: y.sample_rate(),
            right: x_gen.sample_rate(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptySignal);
    }
    spec.validate(y.sample_rate())?;
    assert!(crossfade < chunk, "crossfade must be shorter than a chunk");
    let (ys, xs, rate) = (y.samples(), x_gen.samples(), y.sample_rate());
    if ys.len() <= chunk {
        return Waveform::new(refine_block(ys, xs, rate, spec)?, rate);
    }
    let stride = chunk - crossfade;
    let ramp = |k: usize| (k as f64 + 0.5) / crossfade as f64;
    let mut out = vec![0.0; ys.len()];
    let mut start = 0;
    loop {
        let end = (start + chunk).min(ys.len());
        let block = refine_block(&ys[start..end], &xs[start..end], rate, spec)?;
        let last = end == ys.len();
        for (j, v) in block.into_iter().enumerate() {
            let mut w = 1.0;
            if start > 0 && j < crossfade {
                w *= ramp(j);
            }
            if !last && j >= stride {
                w *= 1.0 - ramp(j - stride);
            }
            out[start + j] += w * v;
        }
        if last {
            break;
        }
        start += stride;
    }
    Waveform::new(out, rate)
}

/// Merges the anchor `y` with the generated `x_gen`; output has `y`'s length.
pub fn refine(y: &Waveform, x_gen: &Waveform, spec: &CrossoverSpec) -> Result<Waveform> {
    refine_chunked(y, x_gen, spec, CHUNK_LEN, CHUNK_CROSSFADE)
}

/// Writes `frequency_hz,mask_value` for each bin of an `n_fft` transform.
pub fn write_mask_csv<W: Write>(
    spec: &CrossoverSpec,
    n_fft: usize,
    sample_rate: u32,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "frequency_hz,mask_value")?;
    for k in 0..=n_fft / 2 {
        let f = k as f64 * f64::from(sample_rate) / n_fft as f64;
        writeln!(out, "{:?},{:?}", f, spec.mask_value(f))?;
    }
    Ok(())
}
