//! Mel-conditioned ConvNeXt generator with an iSTFT head.
//!
//! ```text
//! log-mel [T, n_mels]
//!   embed      Conv1d(n_mels -> dim, k = 7, same padding)
//!   blocks     n_blocks x ConvNeXt(dim, intermediate, k = 7)
//!   final_norm LayerNorm(dim)
//!   pointwise  Linear(dim -> dim)
//!   head       Linear(dim -> 2 * (n_fft/2 + 1))
//!   split      log-magnitude | phase
//!   spectrum   exp(min(m, 12)) * (cos p + i sin p)   [T, n_fft/2 + 1]
//!   iSTFT      Hann, hop = n_fft / 4
//! ```
//!
//! Every stage keeps `T`; the waveform is `T * hop` samples long before it is
//! trimmed to the input length. Arithmetic inside the network is `f32`.

mod format;
pub mod layers;

pub use format::{load_weights, read_weights, save_weights, write_weights, FORMAT_VERSION, MAGIC};
pub use layers::convnext_block;

use ndarray::{Array1, Array2, Array3};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{
    istft_with_length, mel_spectrogram, Complex64, ComplexSpectrogram, MelConfig, MelSpectrogram,
    Waveform,
};

/// Upper clip on predicted log-magnitudes.
pub const LOG_MAG_CLIP: f32 = 12.0;
/// Hard limit applied to generated waveforms.
pub const OUTPUT_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocoderConfig {
    pub n_mels: usize,
    pub dim: usize,
    pub intermediate: usize,
    pub n_blocks: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub dw_kernel: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            dim: 512,
            intermediate: 1536,
            n_blocks: 8,
            n_fft: 2048,
            hop: 512,
            sample_rate: 48_000,
            dw_kernel: 7,
        }
    }
}

impl VocoderConfig {
    /// Accepted parameter budget for the full-size model (15M +- 10%).
    pub const PARAMETER_BUDGET: std::ops::RangeInclusive<usize> = 13_500_000..=16_500_000;

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_mels == 0 || self.dim == 0 || self.intermediate == 0 {
            return bad(format!("vocoder widths must be nonzero: {self:?}"));
        }
        if self.dw_kernel.is_multiple_of(2) {
            return bad(format!("depthwise kernel must be odd, got {}", self.dw_kernel));
        }
        if !(self.n_fft >= 4 && self.n_fft.is_power_of_two()) {
            return bad(format!("n_fft must be a power of two, got {}", self.n_fft));
        }
        if self.n_fft != 4 * self.hop {
            return bad(format!(
                "n_fft must equal 4 * hop, got {} and {}",
                self.n_fft, self.hop
            ));
        }
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let (d, i, k) = (self.dim, self.intermediate, self.dw_kernel);
        let block = d * k + d + 2 * d + d * i + i + i * d + d;
        let embed = d * self.n_mels * k + d;
        let head = 2 * self.n_bins() * d + 2 * self.n_bins();
        self.n_blocks * block + embed + 2 * d + (d * d + d) + head
    }

    pub fn mel_config(&self) -> MelConfig {
        MelConfig {
            n_mels: self.n_mels,
            n_fft: self.n_fft,
            hop: self.hop,
            sample_rate: self.sample_rate,
            f_min: 0.0,
            f_max: f64::from(self.sample_rate) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNextBlockWeights {
    /// `dim x dw_kernel`
    pub dw_weight: Array2<f32>,
    pub dw_bias: Array1<f32>,
    pub norm_gamma: Array1<f32>,
    pub norm_beta: Array1<f32>,
    /// `intermediate x dim`
    pub pw1_weight: Array2<f32>,
    pub pw1_bias: Array1<f32>,
    /// `dim x intermediate`
    pub pw2_weight: Array2<f32>,
    pub pw2_bias: Array1<f32>,
}

impl ConvNextBlockWeights {
    /// Zero convolution and projections with an identity norm; the residual
    /// branch of such a block contributes nothing.
    pub fn zeroed(dim: usize, intermediate: usize, kernel: usize) -> Self {
        Self {
            dw_weight: Array2::zeros((dim, kernel)),
            dw_bias: Array1::zeros(dim),
            norm_gamma: Array1::ones(dim),
            norm_beta: Array1::zeros(dim),
            pw1_weight: Array2::zeros((intermediate, dim)),
            pw1_bias: Array1::zeros(intermediate),
            pw2_weight: Array2::zeros((dim, intermediate)),
            pw2_bias: Array1::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderModel {
    pub config: VocoderConfig,
    /// `dim x n_mels x dw_kernel`
    pub embed_weight: Array3<f32>,
    pub embed_bias: Array1<f32>,
    pub blocks: Vec<ConvNextBlockWeights>,
    pub final_norm_gamma: Array1<f32>,
    pub final_norm_beta: Array1<f32>,
    /// `dim x dim`
    pub pointwise_weight: Array2<f32>,
    pub pointwise_bias: Array1<f32>,
    /// `2 * n_bins x dim`; rows `0..n_bins` are log-magnitudes, the rest phases.
    pub head_weight: Array2<f32>,
    pub head_bias: Array1<f32>,
}

/// Name and shape of every tensor, in file order.
pub fn tensor_layout(config: &VocoderConfig) -> Vec<(String, Vec<usize>)> {
    let (d, i, k, nb) = (config.dim, config.intermediate, config.dw_kernel, config.n_bins());
    let mut out = vec![
        ("embed.weight".to_string(), vec![d, config.n_mels, k]),
        ("embed.bias".to_string(), vec![d]),
    ];
    for b in 0..config.n_blocks {
        let p = |n: &str| format!("blocks.{b}.{n}");
        out.extend([
            (p("dwconv.weight"), vec![d, k]),
            (p("dwconv.bias"), vec![d]),
            (p("norm.gamma"), vec![d]),
            (p("norm.beta"), vec![d]),
            (p("pwconv1.weight"), vec![i, d]),
            (p("pwconv1.bias"), vec![i]),
            (p("pwconv2.weight"), vec![d, i]),
            (p("pwconv2.bias"), vec![d]),
        ]);
    }
    out.extend([
        ("final_norm.gamma".to_string(), vec![d]),
        ("final_norm.beta".to_string(), vec![d]),
        ("pointwise.weight".to_string(), vec![d, d]),
        ("pointwise.bias".to_string(), vec![d]),
        ("head.weight".to_string(), vec![2 * nb, d]),
        ("head.bias".to_string(), vec![2 * nb]),
    ]);
    out
}

fn to_array1(v: Vec<f32>) -> Array1<f32> {
    Array1::from_vec(v)
}

fn to_array2(v: Vec<f32>, shape: &[usize]) -> Array2<f32> {
    Array2::from_shape_vec((shape[0], shape[1]), v).expect("shape checked against layout")
}

impl VocoderModel {
    /// Builds a model from flat tensors in [`tensor_layout`] order.
    pub fn from_tensors(config: VocoderConfig, tensors: Vec<Vec<f32>>) -> Result<Self> {
        config.validate()?;
        let layout = tensor_layout(&config);
        if tensors.len() != layout.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            let want: usize = shape.iter().product();
            if t.len() != want {
                return Err(Error::Shape {
                    tensor: name.clone(),
                    expected: shape.clone(),
                    found: vec![t.len()],
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tensor `{name}`")));
            }
        }
        let mut it = tensors.into_iter().zip(layout.iter().map(|(_, s)| s.clone()));
        let mut next = || it.next().expect("count checked above");
        let (embed_w, embed_shape) = next();
        let embed_weight = Array3::from_shape_vec(
            (embed_shape[0], embed_shape[1], embed_shape[2]),
            embed_w,
        )
        .expect("shape checked against layout");
        let embed_bias = to_array1(next().0);
        let blocks = (0..config.n_blocks)
            .map(|_| {
                let (w, s) = next();
                let dw_weight = to_array2(w, &s);
                let dw_bias = to_array1(next().0);
                let norm_gamma = to_array1(next().0);
                let norm_beta = to_array1(next().0);
                let (w, s) = next();
                let pw1_weight = to_array2(w, &s);
                let pw1_bias = to_array1(next().0);
                let (w, s) = next();
                let pw2_weight = to_array2(w, &s);
                let pw2_bias = to_array1(next().0);
                ConvNextBlockWeights {
                    dw_weight,
                    dw_bias,
                    norm_gamma,
                    norm_beta,
                    pw1_weight,
                    pw1_bias,
                    pw2_weight,
                    pw2_bias,
                }
            })
            .collect();
        let final_norm_gamma = to_array1(next().0);
        let final_norm_beta = to_array1(next().0);
        let (w, s) = next();
        let pointwise_weight = to_array2(w, &s);
        let pointwise_bias = to_array1(next().0);
        let (w, s) = next();
        let head_weight = to_array2(w, &s);
        let head_bias = to_array1(next().0);
        Ok(Self {
            config,
            embed_weight,
            embed_bias,
            blocks,
            final_norm_gamma,
            final_norm_beta,
            pointwise_weight,
            pointwise_bias,
            head_weight,
            head_bias,
        })
    }

    /// Flat views of every tensor in [`tensor_layout`] order.
    pub fn tensors(&self) -> Vec<&[f32]> {
        fn flat<D: ndarray::Dimension>(a: &ndarray::Array<f32, D>) -> &[f32] {
            a.as_slice().expect("model tensors are standard layout")
        }
        let mut out = vec![flat(&self.embed_weight), flat(&self.embed_bias)];
        for b in &self.blocks {
            out.extend([
                flat(&b.dw_weight),
                flat(&b.dw_bias),
                flat(&b.norm_gamma),
                flat(&b.norm_beta),
                flat(&b.pw1_weight),
                flat(&b.pw1_bias),
                flat(&b.pw2_weight),
                flat(&b.pw2_bias),
            ]);
        }
        out.extend([
            flat(&self.final_norm_gamma),
            flat(&self.final_norm_beta),
            flat(&self.pointwise_weight),
            flat(&self.pointwise_bias),
            flat(&self.head_weight),
            flat(&self.head_bias),
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Seeded initialisation: every weight and bias drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` of its layer; norms start at
    /// `gamma = 1`, `beta = 0`.
    pub fn init_random(config: VocoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = tensor_layout(&config);
        let tensors = layout
            .iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                if name.ends_with(".gamma") {
                    return vec![1.0; len];
                }
                if name.ends_with(".beta") {
                    return vec![0.0; len];
                }
                let fan_in = fan_in(name, &config);
                let bound = 1.0 / (fan_in as f32).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..len).map(|_| dist.sample(&mut rng)).collect()
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    /// Mel frames to a complex spectrogram with the same frame count.
    pub fn forward(&self, mel: &MelSpectrogram) -> Result<ComplexSpectrogram> {
        let cfg = &self.config;
        if mel.n_mels() != cfg.n_mels {
            return Err(Error::Shape {
                tensor: "mel input".into(),
                expected: vec![mel.n_frames(), cfg.n_mels],
                found: vec![mel.n_frames(), mel.n_mels()],
            });
        }
        let x = mel.frames().mapv(|v| v as f32);
        let head = self.backbone(x)?;
        let nb = cfg.n_bins();
        let spec = Array2::from_shape_fn((head.nrows(), nb), |(t, k)| {
            let mag = head[[t, k]].min(LOG_MAG_CLIP).exp();
            let phase = head[[t, nb + k]];
            Complex64::from_polar(f64::from(mag), f64::from(phase))
        });
        if spec.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite("vocoder spectrum".into()));
        }
        ComplexSpectrogram::new(spec, cfg.n_fft, cfg.hop, cfg.sample_rate)
    }

    /// Raw head activations, `frames x 2 * n_bins`.
    pub fn backbone(&self, x: Array2<f32>) -> Result<Array2<f32>> {
        use layers::{all_finite, conv1d, layer_norm, linear};
        let mut h = conv1d(x.view(), &self.embed_weight, self.embed_bias.view());
        for (i, block) in self.blocks.iter().enumerate() {
            h = convnext_block(h.view(), block)?;
            if !all_finite(&h) {
                return Err(Error::NonFinite(format!("output of block {i}")));
            }
        }
        let h = layer_norm(h.view(), self.final_norm_gamma.view(), self.final_norm_beta.view());
        let h = linear(h.view(), self.pointwise_weight.view(), self.pointwise_bias.view());
        let out = linear(h.view(), self.head_weight.view(), self.head_bias.view());
        if !all_finite(&out) {
            return Err(Error::NonFinite("head output".into()));
        }
        Ok(out)
    }

    /// Full waveform-to-waveform pass; output length equals input length and
    /// samples are clipped to `[-4, 4]`.
    pub fn generate(&self, y: &Waveform) -> Result<Waveform> {
        if y.sample_rate() != self.config.sample_rate {
            return Err(Error::RateMismatch {
                left: y.sample_rate(),
                right: self.config.sample_rate,
            });
        }
        let mel = mel_spectrogram(y, &self.config.mel_config())?;
        let spec = self.forward(&mel)?;
        let out = istft_with_length(&spec, y.len())?;
        Waveform::new(
            out.samples()
                .iter()
                .map(|v| v.clamp(-OUTPUT_CLIP, OUTPUT_CLIP))
                .collect(),
            out.sample_rate(),
        )
    }
}

fn fan_in(name: &str, config: &VocoderConfig) -> usize {
    let layer = name.rsplit_once('.').map_or(name, |(l, _)| l);
    if layer == "embed" {
        config.n_mels * config.dw_kernel
    } else if layer.ends_with("dwconv") {
        config.dw_kernel
    } else if layer.ends_with("pwconv2") {
        config.intermediate
    } else {
        config.dim
    }
}
