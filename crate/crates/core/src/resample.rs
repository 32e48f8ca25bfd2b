//! Sample-rate conversion and the band-limiting degradation pipeline.
//!
//! Rates are related by the reduced ratio `up / down` (e.g. 48 kHz -> 44.1 kHz
//! is 147/160). Output sample `n` sits at input position `n * down / up`, so
//! there are at most `up` distinct fractional offsets; the windowed-sinc
//! kernel is tabulated once per offset when that count is small.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Sinc passband edge as a fraction of the lower Nyquist frequency.
///
/// The Kaiser transition band straddles this point. At 0.9 it lines up with
/// the start of the default crossover, so the band the refiner blends over is
/// already in the filter's stopband and nothing above the new Nyquist leaks.
pub const SINC_CUTOFF: f64 = 0.9;

const MAX_TABULATED_PHASES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResampleMethod {
    /// Kaiser-windowed sinc. `taps` counts kernel taps at the lower of the two
    /// rates and must be odd.
    Sinc { taps: usize, kaiser_beta: f64 },
    ZeroOrderHold,
    Linear,
}

impl ResampleMethod {
    pub const DEFAULT_SINC_TAPS: usize = 255;
    pub const DEFAULT_KAISER_BETA: f64 = 8.0;

    pub fn sinc() -> Self {
        ResampleMethod::Sinc {
            taps: Self::DEFAULT_SINC_TAPS,
            kaiser_beta: Self::DEFAULT_KAISER_BETA,
        }
    }

    fn validate(&self) -> Result<()> {
        if let ResampleMethod::Sinc { taps, kaiser_beta } = *self {
            if taps == 0 || taps % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "sinc taps must be odd and positive, got {taps}"
                )));
            }
            if !(kaiser_beta.is_finite() && kaiser_beta >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "kaiser beta must be finite and nonnegative, got {kaiser_beta}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResampleMethod::Sinc { .. } => f.write_str("sinc"),
            ResampleMethod::ZeroOrderHold => f.write_str("zoh"),
            ResampleMethod::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinc" => Ok(Self::sinc()),
            "zoh" | "zero-order-hold" => Ok(ResampleMethod::ZeroOrderHold),
            "linear" => Ok(ResampleMethod::Linear),
            other => Err(Error::InvalidArgument(format!(
                "unknown resampling method `{other}` (expected sinc, zoh or linear)"
            ))),
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reduced `(up, down)` factors with `target / source == up / down`.
pub fn rate_ratio(source: u32, target: u32) -> (u64, u64) {
    let g = gcd(u64::from(source), u64::from(target));
    (u64::from(target) / g, u64::from(source) / g)
}

/// `round(len * target / source)`, halves rounded up.
pub fn output_len(len: usize, source: u32, target: u32) -> usize {
    let (up, down) = rate_ratio(source, target);
    ((len as u64 * up * 2 + down) / (2 * down)) as usize
}

// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct SincKernel {
    /// Cutoff in cycles per input sample.
    cutoff: f64,
    /// Half-width of the kernel support, in input samples.
    half_width: f64,
    beta: f64,
    i0_beta: f64,
    /// Taps either side of the integer base index.
    reach: usize,
}

impl SincKernel {
    fn new(taps: usize, beta: f64, up: u64, down: u64) -> Self {
        // <= 1 when decimating
        let scale = (up as f64 / down as f64).min(1.0);
        let cutoff = 0.5 * scale * SINC_CUTOFF;
        let half_width = ((taps - 1) / 2) as f64 / scale;
        Self {
            cutoff,
            half_width,
            beta,
            i0_beta: bessel_i0(beta),
            reach: half_width.ceil() as usize + 1,
        }
    }

    fn eval(&self, tau: f64) -> f64 {
        if tau.abs() > self.half_width {
            return 0.0;
        }
        let arg = 2.0 * self.cutoff * tau;
        let sinc = if arg == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
        };
        let r = tau / self.half_width;
        let window = bessel_i0(self.beta * (1.0 - r * r).max(0.0).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * window
    }

    /// Coefficients for input indices `base - reach ..= base + reach` when the
    /// output lands `frac` samples after `base`; normalised to unit DC gain.
    fn phase(&self, frac: f64) -> Vec<f64> {
        let r = self.reach as isize;
        let mut c: Vec<f64> = (-r..=r).map(|j| self.eval(j as f64 - frac)).collect();
        let sum: f64 = c.iter().sum();
        c.iter_mut().for_each(|v| *v /= sum);
        c
    }
}

fn convolve_at(x: &[f64], base: usize, reach: usize, coeffs: &[f64]) -> f64 {
    let first = base as isize - reach as isize;
    if first >= 0 && first as usize + coeffs.len() <= x.len() {
        let start = first as usize;
        x[start..start + coeffs.len()]
            .iter()
            .zip(coeffs)
            .map(|(a, b)| a * b)
            .sum()
    } else {
        coeffs
            .iter()
            .enumerate()
            .filter_map(|(j, c)| {
                let idx = first + j as isize;
                (idx >= 0 && (idx as usize) < x.len()).then(|| x[idx as usize] * c)
            })
            .sum()
    }
}

fn resample_sinc(x: &[f64], up: u64, down: u64, out_len: usize, taps: usize, beta: f64) -> Vec<f64> {
    let kernel = SincKernel::new(taps, beta, up, down);
    let table: Option<Vec<Vec<f64>>> = (up as usize <= MAX_TABULATED_PHASES)
        .then(|| (0..up).map(|p| kernel.phase(p as f64 / up as f64)).collect());
    (0..out_len as u64)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as usize;
            let phase = (pos % up) as usize;
            match &table {
                Some(t) => convolve_at(x, base, kernel.reach, &t[phase]),
                None => {
                    let c = kernel.phase(phase as f64 / up as f64);
                    convolve_at(x, base, kernel.reach, &c)
                }
            }
        })
        .collect()
}

fn resample_zoh(x: &[f64], up: u64, down: u64, out_len: usize) -> Vec<f64> {
    (0..out_len as u64)
        .map(|n| x[((n * down / up) as usize).min(x.len() - 1)])
        .collect()
}

fn resample_linear(x: &[f64], up: u64, down: u64, out_len: usize) -> Vec<f64> {
    let last = x.len() - 1;
    (0..out_len as u64)
        .map(|n| {
            let pos = n * down;
            let i = ((pos / up) as usize).min(last);
            let frac = (pos % up) as f64 / up as f64;
            let j = (i + 1).min(last);
            x[i] * (1.0 - frac) + x[j] * frac
        })
        .collect()
}

/// Converts `w` to `target_rate`.
///
/// Output length is `round(len * target / source)`. Only the sinc method
/// band-limits; zero-order hold and linear interpolation alias on purpose.
pub fn resample(w: &Waveform, target_rate: u32, method: ResampleMethod) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    method.validate()?;
    let source = w.sample_rate();
    if source == target_rate {
        return Ok(w.clone());
    }
    let (up, down) = rate_ratio(source, target_rate);
    let out_len = output_len(w.len(), source, target_rate);
    let x = w.samples();
    let y = match method {
        ResampleMethod::Sinc { taps, kaiser_beta } => {
            resample_sinc(x, up, down, out_len, taps, kaiser_beta)
        }
        ResampleMethod::ZeroOrderHold => resample_zoh(x, up, down, out_len),
        ResampleMethod::Linear => resample_linear(x, up, down, out_len),
    };
    Waveform::new(y, target_rate)
}

/// Uniform mid-rise quantiser with `2^bits` levels over `[-1, 1]`.
///
/// Samples are clipped to `[-1, 1]` first; level `k` reconstructs to
/// `-1 + (k + 0.5) * step` with `step = 2 / 2^bits`.
pub fn quantize(w: &Waveform, bits: u8) -> Result<Waveform> {
    if !(4..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "quantizer depth must be 4..=16 bits, got {bits}"
        )));
    }
    let levels = 1u32 << bits;
    let step = 2.0 / f64::from(levels);
    let max_level = f64::from(levels - 1);
    let y = w
        .samples()
        .iter()
        .map(|&s| {
            let k = ((s.clamp(-1.0, 1.0) + 1.0) / step).floor().min(max_level);
            -1.0 + (k + 0.5) * step
        })
        .collect();
    Waveform::new(y, w.sample_rate())
}

/// Working rate of the whole pipeline.
pub const PIPELINE_RATE: u32 = 48_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeSpec {
    pub target_rate: u32,
    pub method: ResampleMethod,
    pub quant_bits: Option<u8>,
}

impl DegradeSpec {
    pub fn new(target_rate: u32, method: ResampleMethod, quant_bits: Option<u8>) -> Result<Self> {
        let spec = Self {
            target_rate,
            method,
            quant_bits,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(8_000..=PIPELINE_RATE).contains(&self.target_rate) {
            return Err(Error::InvalidArgument(format!(
                "degradation rate must be 8000..=48000 Hz, got {}",
                self.target_rate
            )));
        }
        if let Some(bits) = self.quant_bits {
            if !(4..=16).contains(&bits) {
                return Err(Error::InvalidArgument(format!(
                    "quantizer depth must be 4..=16 bits, got {bits}"
                )));
            }
        }
        self.method.validate()
    }
}

/// Down-samples a 48 kHz reference to `spec.target_rate`, optionally
/// quantises at that rate, and brings it back to 48 kHz with the same method.
/// The result is trimmed or zero-padded to the input length.
pub fn degrade(w: &Waveform, spec: &DegradeSpec) -> Result<Waveform> {
    spec.validate()?;
    if w.sample_rate() != PIPELINE_RATE {
        return Err(Error::RateMismatch {
            left: w.sample_rate(),
            right: PIPELINE_RATE,
        });
    }
    let mut low = resample(w, spec.target_rate, spec.method)?;
    if let Some(bits) = spec.quant_bits {
        low = quantize(&low, bits)?;
    }
    let back = resample(&low, PIPELINE_RATE, spec.method)?;
    Ok(back.fit_to_len(w.len()))
}
