#![allow(dead_code)]

pub mod oracle;

use bwe_core::signal::stft;
use bwe_core::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn noise(len: usize, amplitude: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new(
        (0..len).map(|_| rng.random_range(-amplitude..amplitude)).collect(),
        48_000,
    )
    .unwrap()
}

pub fn tone(freq: f64, amplitude: f64, rate: u32, len: usize) -> Waveform {
    Waveform::new(
        (0..len)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
            .collect(),
        rate,
    )
    .unwrap()
}

/// Welch-style band power: Hann frames of 2048 at hop 512, power averaged
/// over frames, summed over bins with centre frequency in `[lo, hi)`.
pub fn band_power(w: &Waveform, lo: f64, hi: f64) -> f64 {
    let spec = stft(w, 2048, 512).unwrap();
    let power = spec.power();
    let bin_hz = f64::from(w.sample_rate()) / 2048.0;
    let frames = power.nrows() as f64;
    (0..power.ncols())
        .filter(|&k| {
            let f = k as f64 * bin_hz;
            f >= lo && f < hi
        })
        .map(|k| power.column(k).sum() / frames)
        .sum()
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let sig: f64 = reference.iter().map(|v| v * v).sum();
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    10.0 * (sig / err).log10()
}
