use ndarray::Array2;

use super::stft::stft;
use super::Waveform;
use crate::error::{Error, Result};

/// Floor applied to mel power before the natural log.
pub const MEL_POWER_FLOOR: f64 = 1e-10;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels x (n_fft/2 + 1)`.
///
/// Filter `m` rises linearly from edge `m` to centre `m+1` and falls to edge
/// `m+2`, with the `n_mels + 2` edges equally spaced in mel between `f_min`
/// and `f_max`. Peaks are 1 (no area normalisation).
pub fn mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<Array2<f64>> {
    let nyquist = f64::from(sample_rate) / 2.0;
    if n_mels == 0 || n_fft < 2 {
        return Err(Error::InvalidArgument(format!(
            "need n_mels > 0 and n_fft >= 2, got {n_mels} / {n_fft}"
        )));
    }
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "mel range must satisfy 0 <= f_min < f_max <= {nyquist}, got {f_min}..{f_max}"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / n_fft as f64;
    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (centre - left);
            let down = (right - f) / (right - centre);
            fb[[m, k]] = up.min(down).max(0.0);
        }
        if fb.row(m).sum() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mel filter {m} ({left:.1}..{right:.1} Hz) covers no FFT bin; \
                 {n_mels} mels is too many for n_fft {n_fft}"
            )));
        }
    }
    Ok(fb)
}

/// Parameters of a log-mel analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
}

impl MelConfig {
    /// Vocoder conditioning features: 80 bands, 2048/512 at 48 kHz, full band.
    pub fn conditioning() -> Self {
        Self {
            n_mels: 80,
            n_fft: 2048,
            hop: 512,
            sample_rate: 48_000,
            f_min: 0.0,
            f_max: 24_000.0,
        }
    }

    pub fn filterbank(&self) -> Result<Array2<f64>> {
        mel_filterbank(self.n_mels, self.n_fft, self.sample_rate, self.f_min, self.f_max)
    }
}

/// Log-power mel spectrogram, `n_frames x n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: Array2<f64>,
    n_fft: usize,
    hop: usize,
    sample_rate: u32,
}

impl MelSpectrogram {
    pub fn new(frames: Array2<f64>, n_fft: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mel spectrogram".into()));
        }
        Ok(Self {
            frames,
            n_fft,
            hop,
            sample_rate,
        })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_mels(&self) -> usize {
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
}

/// `ln(max(fb · |X|², 1e-10))` per frame.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::RateMismatch {
            left: w.sample_rate(),
            right: cfg.sample_rate,
        });
    }
    let fb = cfg.filterbank()?;
    let power = stft(w, cfg.n_fft, cfg.hop)?.power();
    let mel = power
        .dot(&fb.t())
        .mapv(|p| p.max(MEL_POWER_FLOOR).ln());
    MelSpectrogram::new(mel, cfg.n_fft, cfg.hop, cfg.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stft;

    #[test]
    fn conditioning_filterbank_shape() {
        let fb = MelConfig::conditioning().filterbank().unwrap();
        assert_eq!(fb.dim(), (80, 1025));
        assert!(fb.iter().all(|&v| v >= 0.0));
        for row in fb.rows() {
            assert!(row.sum() > 0.0);
        }
    }

    #[test]
    fn centres_increase_and_bins_covered() {
        let fb = mel_filterbank(128, 2048, 48_000, 0.0, 24_000.0).unwrap();
        let centres: Vec<usize> = fb
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0
            })
            .collect();
        assert!(centres.windows(2).all(|w| w[0] <= w[1]));
        let hz_centres: Vec<f64> = (1..=128)
            .map(|i| mel_to_hz(hz_to_mel(24_000.0) * i as f64 / 129.0))
            .collect();
        assert!(hz_centres.windows(2).all(|w| w[0] < w[1]));
        let col_sums = fb.sum_axis(ndarray::Axis(0));
        for k in centres[0]..=centres[127] {
            assert!(col_sums[k] > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 100.0, 700.0, 4000.0, 24_000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn too_many_mels_is_an_error() {
        assert!(mel_filterbank(400, 256, 48_000, 0.0, 24_000.0).is_err());
        assert!(mel_filterbank(80, 2048, 48_000, 100.0, 50.0).is_err());
        assert!(mel_filterbank(80, 2048, 48_000, 0.0, 30_000.0).is_err());
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let w = Waveform::zeros(48_000, 48_000).unwrap();
        let mel = mel_spectrogram(&w, &MelConfig::conditioning()).unwrap();
        let floor = MEL_POWER_FLOOR.ln();
        assert!(mel.frames().iter().all(|&v| v == floor));
    }

    #[test]
    fn louder_is_not_quieter() {
        let x: Vec<f64> = (0..48_000)
            .map(|i| 0.05 * ((i as f64 * 0.1).sin() + (i as f64 * 1.7).cos()))
            .collect();
        let w = Waveform::new(x, 48_000).unwrap();
        let cfg = MelConfig::conditioning();
        let a = mel_spectrogram(&w, &cfg).unwrap();
        let b = mel_spectrogram(&w.scaled(10.0).unwrap(), &cfg).unwrap();
        assert!(a.frames().iter().zip(b.frames()).all(|(a, b)| b >= a));
    }

    #[test]
    fn frame_count_matches_stft() {
        let w = Waveform::new(vec![0.1; 48_000], 48_000).unwrap();
        let cfg = MelConfig::conditioning();
        let mel = mel_spectrogram(&w, &cfg).unwrap();
        let spec = stft(&w, 2048, 512).unwrap();
        assert_eq!(mel.n_frames(), spec.n_frames());
        assert_eq!(mel.n_frames(), 48_000 / 512 + 1);
        assert_eq!(mel.n_mels(), 80);
    }

    #[test]
    fn wrong_rate_rejected() {
        let w = Waveform::zeros(1000, 16_000).unwrap();
        assert!(matches!(
            mel_spectrogram(&w, &MelConfig::conditioning()),
            Err(Error::RateMismatch { .. })
        ));
    }
}
