//! Channels-last (`frames x channels`) building blocks of the generator.

use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2};

use super::ConvNextBlockWeights;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f32 = 1e-6;

/// Exact GELU, `x * Phi(x)` with the Gaussian CDF written via `erf`.
#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

/// `x · Wᵀ + b` for `W` shaped `out x in`.
pub fn linear(x: ArrayView2<f32>, weight: ArrayView2<f32>, bias: ArrayView1<f32>) -> Array2<f32> {
    let mut y = x.dot(&weight.t());
    y += &bias;
    y
}

/// Per-frame normalisation over channels followed by the affine map.
pub fn layer_norm(x: ArrayView2<f32>, gamma: ArrayView1<f32>, beta: ArrayView1<f32>) -> Array2<f32> {
    let mut y = x.to_owned();
    let n = x.ncols() as f32;
    for mut row in y.rows_mut() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.iter_mut()
            .zip(gamma.iter().zip(beta.iter()))
            .for_each(|(v, (g, b))| *v = (*v - mean) * inv * g + b);
    }
    y
}

/// Depthwise temporal convolution with zero "same" padding.
///
/// `weight` is `channels x kernel`; output frame `t` sees input frames
/// `t - kernel/2 ..= t + kernel/2`.
pub fn depthwise_conv(x: ArrayView2<f32>, weight: ArrayView2<f32>, bias: ArrayView1<f32>) -> Array2<f32> {
    let (frames, _) = x.dim();
    let k = weight.ncols();
    let pad = k / 2;
    let mut y = Array2::zeros(x.raw_dim());
    y += &bias;
    for j in 0..k {
        // input frame t + j - pad contributes to output frame t
        let lo = pad.saturating_sub(j);
        let hi = (frames + pad).saturating_sub(j).min(frames);
        if lo >= hi {
            continue;
        }
        let src = x.slice(s![lo + j - pad..hi + j - pad, ..]);
        let w = weight.column(j);
        let mut dst = y.slice_mut(s![lo..hi, ..]);
        dst.zip_mut_with(&(&src * &w), |d, v| *d += v);
    }
    y
}

/// Dense temporal convolution `in_channels -> out_channels` with zero "same"
/// padding; `weight` is `out x in x kernel`.
pub fn conv1d(x: ArrayView2<f32>, weight: &Array3<f32>, bias: ArrayView1<f32>) -> Array2<f32> {
    let (frames, c_in) = x.dim();
    let (c_out, _, k) = weight.dim();
    let pad = k / 2;
    // im2col: column index c * k + j holds input channel c at tap j
    let mut cols = Array2::<f32>::zeros((frames, c_in * k));
    for t in 0..frames {
        for j in 0..k {
            let src = t as isize + j as isize - pad as isize;
            if src < 0 || src as usize >= frames {
                continue;
            }
            let row = x.row(src as usize);
            for c in 0..c_in {
                cols[[t, c * k + j]] = row[c];
            }
        }
    }
    let w = weight
        .view()
        .into_shape_with_order((c_out, c_in * k))
        .expect("standard-layout conv weight");
    let mut y = cols.dot(&w.t());
    y += &bias;
    y
}

/// `x + pw2(gelu(pw1(norm(dwconv(x)))))`.
pub fn convnext_block(x: ArrayView2<f32>, w: &ConvNextBlockWeights) -> Result<Array2<f32>> {
    let dim = w.dw_weight.nrows();
    if x.ncols() != dim {
        return Err(Error::Shape {
            tensor: "convnext block input".into(),
            expected: vec![x.nrows(), dim],
            found: vec![x.nrows(), x.ncols()],
        });
    }
    let h = depthwise_conv(x, w.dw_weight.view(), w.dw_bias.view());
    let h = layer_norm(h.view(), w.norm_gamma.view(), w.norm_beta.view());
    let mut h = linear(h.view(), w.pw1_weight.view(), w.pw1_bias.view());
    h.mapv_inplace(gelu);
    let mut h = linear(h.view(), w.pw2_weight.view(), w.pw2_bias.view());
    h += &x;
    Ok(h)
}

pub(crate) fn all_finite(x: &Array2<f32>) -> bool {
    x.iter().all(|v| v.is_finite())
}
