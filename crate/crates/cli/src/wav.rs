//! Mono WAV reading and writing.

use std::path::Path;

use bwe_core::Waveform;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::CliError;

pub const MIN_RATE: u32 = 8_000;
pub const MAX_RATE: u32 = 48_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Float32,
    Pcm16,
}

/// Reads PCM 16/24-bit or float 32-bit mono audio scaled to `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<Waveform, CliError> {
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::Format(format!(
            "{}: {} channels, only mono input is supported",
            path.display(),
            spec.channels
        )));
    }
    if !(MIN_RATE..=MAX_RATE).contains(&spec.sample_rate) {
        return Err(CliError::Format(format!(
            "{}: sample rate {} Hz outside {MIN_RATE}..={MAX_RATE}",
            path.display(),
            spec.sample_rate
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<Result<_, _>>()
        }
        (format, bits) => {
            return Err(CliError::Format(format!(
                "{}: unsupported sample format {format:?} {bits}-bit",
                path.display()
            )))
        }
    }
    .map_err(|e| wav_error(path, e))?;
    Ok(Waveform::new(samples, spec.sample_rate)?)
}

pub fn write_wav(path: &Path, w: &Waveform, format: OutputFormat) -> Result<(), CliError> {
    let (bits_per_sample, sample_format) = match format {
        OutputFormat::Float32 => (32, SampleFormat::Float),
        OutputFormat::Pcm16 => (16, SampleFormat::Int),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &v in w.samples() {
        let res = match format {
            OutputFormat::Float32 => writer.write_sample(v as f32),
            OutputFormat::Pcm16 => writer.write_sample(to_pcm16(v)),
        };
        res.map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Full scale is 32768 so that a 16-bit file reads back to the same values;
/// ties round to even.
pub fn to_pcm16(v: f64) -> i16 {
    (v * 32_768.0).round_ties_even().clamp(-32_768.0, 32_767.0) as i16
}

fn wav_error(path: &Path, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Format(format!("{}: {other}", path.display())),
    }
}
