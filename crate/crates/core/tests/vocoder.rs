mod common;

use bwe_core::signal::{mel_spectrogram, MelSpectrogram};
use bwe_core::vocoder::{load_weights, read_weights, save_weights, write_weights};
use bwe_core::vocoder::layers::{convnext_block, layer_norm};
use bwe_core::vocoder::{ConvNextBlockWeights, VocoderConfig, VocoderModel};
use bwe_core::{Error, Waveform};
use common::oracle;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frames(rows: usize, cols: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

fn to_rows(a: &Array2<f64>) -> oracle::Frames {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn max_abs_diff(fast: &Array2<f32>, slow: &oracle::Frames) -> f64 {
    let mut worst = 0.0f64;
    for (t, row) in slow.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((f64::from(fast[[t, c]]) - v).abs());
        }
    }
    worst
}

#[test]
fn block_matches_loop_oracle() {
    let model = VocoderModel::init_random(VocoderConfig::default(), 11).unwrap();
    let x = random_frames(16, 512, 1.0, 3);
    let fast = convnext_block(x.mapv(|v| v as f32).view(), &model.blocks[0]).unwrap();
    // feed the oracle the f32-rounded input so both start from the same values
    let xr = x.mapv(|v| f64::from(v as f32));
    let slow = oracle::block(&to_rows(&xr), &model.blocks[0]);
    let err = max_abs_diff(&fast, &slow);
    assert!(err < 1e-5, "max abs diff {err}");
}

#[test]
fn full_forward_matches_loop_oracle_on_four_frames() {
    let model = VocoderModel::init_random(VocoderConfig::default(), 5).unwrap();
    let mel = random_frames(4, 80, 2.0, 8).mapv(|v| f64::from((v - 4.0) as f32));
    let fast = model.backbone(mel.mapv(|v| v as f32)).unwrap();
    let slow = oracle::head(&model, &to_rows(&mel));
    let err = max_abs_diff(&fast, &slow);
    assert!(err < 1e-5, "max abs diff {err}");

    // the spectrum is exp(log-mag) at the phase row
    let spec = model
        .forward(&MelSpectrogram::new(mel, 2048, 512, 48_000).unwrap())
        .unwrap();
    let nb = 1025;
    for t in 0..4 {
        for k in [0, 1, 500, 1024] {
            let want = bwe_core::signal::Complex64::from_polar(slow[t][k].min(12.0).exp(), slow[t][nb + k]);
            let got = spec.frames()[[t, k]];
            assert!((got - want).norm() <= 1e-4 * want.norm().max(1.0), "{t} {k}");
        }
    }
}

#[test]
fn zero_branch_is_exact_identity() {
    let x = random_frames(9, 32, 3.0, 1).mapv(|v| v as f32);
    let block = ConvNextBlockWeights::zeroed(32, 96, 7);
    assert_eq!(convnext_block(x.view(), &block).unwrap(), x);
}

#[test]
fn constant_input_gives_time_invariant_interior() {
    let cfg = VocoderConfig {
        n_mels: 16,
        dim: 32,
        intermediate: 64,
        n_blocks: 2,
        n_fft: 64,
        hop: 16,
        sample_rate: 48_000,
        dw_kernel: 7,
    };
    let model = VocoderModel::init_random(cfg, 2).unwrap();
    let row: Vec<f32> = (0..16).map(|i| (i as f32 * 0.37).sin() - 3.0).collect();
    let x = Array2::from_shape_fn((40, 16), |(_, c)| row[c]);
    let out = model.backbone(x).unwrap();
    // receptive field is 3 frames per conv on each side: embed + 2 blocks
    let reach = 3 * 3;
    let reference = out.row(reach).to_owned();
    for t in reach..40 - reach {
        for (a, b) in out.row(t).iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }
}

#[test]
fn random_model_generate_is_finite_bounded_and_deterministic() {
    let model = VocoderModel::init_random(VocoderConfig::default(), 0).unwrap();
    let y = common::noise(12_345, 0.3, 4);
    let a = model.generate(&y).unwrap();
    let b = model.generate(&y).unwrap();
    assert_eq!(a.len(), y.len());
    assert_eq!(a.sample_rate(), 48_000);
    assert!(a.samples().iter().all(|v| v.is_finite() && v.abs() <= 4.0));
    assert_eq!(a, b);
    let mel = mel_spectrogram(&y, &model.config.mel_config()).unwrap();
    assert_eq!(model.forward(&mel).unwrap().n_frames(), mel.n_frames());
}

#[test]
fn generate_rejects_wrong_rate() {
    let model = VocoderModel::init_random(VocoderConfig::default(), 0).unwrap();
    let y = Waveform::zeros(1000, 16_000).unwrap();
    assert!(matches!(model.generate(&y), Err(Error::RateMismatch { .. })));
}

#[test]
fn default_config_parameter_count() {
    let cfg = VocoderConfig::default();
    let n = cfg.parameter_count();
    // embed, 8 blocks, final norm, pointwise, head
    let per_block = 512 * 7 + 512 + 2 * 512 + 1536 * 512 + 1536 + 512 * 1536 + 512;
    let expect = 512 * 80 * 7 + 512 + 8 * per_block + 2 * 512 + 512 * 512 + 512 + 2050 * 512 + 2050;
    assert_eq!(n, expect);
    assert!(VocoderConfig::PARAMETER_BUDGET.contains(&n));
    let model = VocoderModel::init_random(cfg, 1).unwrap();
    assert_eq!(model.parameter_count(), n);
}

fn tiny() -> VocoderConfig {
    VocoderConfig {
        n_mels: 8,
        dim: 16,
        intermediate: 24,
        n_blocks: 2,
        n_fft: 64,
        hop: 16,
        sample_rate: 48_000,
        dw_kernel: 7,
    }
}

fn encode(model: &VocoderModel) -> Vec<u8> {
    let mut buf = Vec::new();
    write_weights(model, &mut buf).unwrap();
    buf
}

fn reseal(bytes: &mut [u8]) {
    let n = bytes.len() - 4;
    let crc = crc32fast::hash(&bytes[..n]);
    bytes[n..].copy_from_slice(&crc.to_le_bytes());
}

#[test]
fn corrupted_magic() {
    let mut bytes = encode(&VocoderModel::init_random(tiny(), 1).unwrap());
    bytes[0] = b'X';
    reseal(&mut bytes);
    assert!(matches!(read_weights(&bytes), Err(Error::Format(_))));
}

#[test]
fn header_dim_disagreeing_with_tensor_names_the_tensor() {
    let mut bytes = encode(&VocoderModel::init_random(tiny(), 1).unwrap());
    // config field 1 is dim; claim 32 while the tensors were written for 16
    bytes[12..16].copy_from_slice(&32u32.to_le_bytes());
    reseal(&mut bytes);
    match read_weights(&bytes) {
        Err(Error::Shape {
            tensor,
            expected,
            found,
        }) => {
            assert_eq!(tensor, "embed.weight");
            assert_eq!(expected, vec![32, 8, 7]);
            assert_eq!(found, vec![16, 8, 7]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn flipped_payload_bit_fails_checksum() {
    let bytes = encode(&VocoderModel::init_random(tiny(), 1).unwrap());
    let mut bad = bytes.clone();
    let i = bad.len() - 20;
    bad[i] ^= 0x01;
    assert!(matches!(read_weights(&bad), Err(Error::Checksum { .. })));
    let mut bad = bytes;
    let last = bad.len() - 1;
    bad[last] ^= 0x80;
    assert!(matches!(read_weights(&bad), Err(Error::Checksum { .. })));
}

#[test]
fn file_round_trip() {
    let model = VocoderModel::init_random(tiny(), 3).unwrap();
    let dir = std::env::temp_dir().join(format!("bwe-weights-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.bwe");
    save_weights(&model, &path).unwrap();
    let back = load_weights(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back, model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_norm_output_is_standardised(
        rows in prop::collection::vec(prop::collection::vec(-50.0f32..50.0, 32), 1..6)
    ) {
        let n = rows.len();
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((n, 32), flat).unwrap();
        let y = layer_norm(x.view(), Array1::ones(32).view(), Array1::zeros(32).view());
        for (src, row) in x.rows().into_iter().zip(y.rows()) {
            let mean = f64::from(src.sum()) / 32.0;
            let var = src.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / 32.0;
            let m = row.iter().map(|&v| f64::from(v)).sum::<f64>() / 32.0;
            let v = row.iter().map(|&v| (f64::from(v) - m).powi(2)).sum::<f64>() / 32.0;
            prop_assert!(m.abs() < 1e-4);
            // eps 1e-6 shrinks the variance slightly for small inputs
            let want = var / (var + 1e-6);
            prop_assert!((v - want).abs() < 1e-3, "{} vs {}", v, want);
        }
    }
}
