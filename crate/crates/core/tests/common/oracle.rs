//! Straight-line reference evaluation of the generator, written with plain
//! nested loops in f64 and sharing no code with the crate's layers.

#![allow(clippy::needless_range_loop)]

use bwe_core::vocoder::{ConvNextBlockWeights, VocoderModel};

pub type Frames = Vec<Vec<f64>>;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

fn layer_norm(x: &Frames, gamma: &[f32], beta: &[f32]) -> Frames {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mut mean = 0.0;
            for v in row {
                mean += v;
            }
            mean /= n;
            let mut var = 0.0;
            for v in row {
                var += (v - mean) * (v - mean);
            }
            var /= n;
            let mut out = vec![0.0; row.len()];
            for c in 0..row.len() {
                out[c] = (row[c] - mean) / (var + 1e-6).sqrt() * f64::from(gamma[c])
                    + f64::from(beta[c]);
            }
            out
        })
        .collect()
}

/// `weight` flattened row-major as `out x in`.
fn dense(x: &Frames, weight: &[f32], bias: &[f32]) -> Frames {
    let n_out = bias.len();
    let n_in = weight.len() / n_out;
    x.iter()
        .map(|row| {
            let mut out = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = f64::from(bias[o]);
                for i in 0..n_in {
                    acc += f64::from(weight[o * n_in + i]) * row[i];
                }
                out[o] = acc;
            }
            out
        })
        .collect()
}

pub fn block(x: &Frames, w: &ConvNextBlockWeights) -> Frames {
    let frames = x.len();
    let dim = w.dw_bias.len();
    let k = w.dw_weight.ncols();
    let half = (k / 2) as isize;
    let mut h = vec![vec![0.0; dim]; frames];
    for t in 0..frames {
        for c in 0..dim {
            let mut acc = f64::from(w.dw_bias[c]);
            for j in 0..k {
                let src = t as isize + j as isize - half;
                if src >= 0 && (src as usize) < frames {
                    acc += f64::from(w.dw_weight[[c, j]]) * x[src as usize][c];
                }
            }
            h[t][c] = acc;
        }
    }
    let h = layer_norm(&h, w.norm_gamma.as_slice().unwrap(), w.norm_beta.as_slice().unwrap());
    let mut h = dense(&h, w.pw1_weight.as_slice().unwrap(), w.pw1_bias.as_slice().unwrap());
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v = gelu(*v);
        }
    }
    let h = dense(&h, w.pw2_weight.as_slice().unwrap(), w.pw2_bias.as_slice().unwrap());
    let mut out = x.clone();
    for t in 0..frames {
        for c in 0..dim {
            out[t][c] += h[t][c];
        }
    }
    out
}

/// Head activations (`frames x 2 * n_bins`) for `mel` (`frames x n_mels`).
pub fn head(model: &VocoderModel, mel: &Frames) -> Frames {
    let frames = mel.len();
    let (dim, n_mels, k) = model.embed_weight.dim();
    let half = (k / 2) as isize;
    let mut h = vec![vec![0.0; dim]; frames];
    for t in 0..frames {
        for o in 0..dim {
            let mut acc = f64::from(model.embed_bias[o]);
            for c in 0..n_mels {
                for j in 0..k {
                    let src = t as isize + j as isize - half;
                    if src >= 0 && (src as usize) < frames {
                        acc += f64::from(model.embed_weight[[o, c, j]]) * mel[src as usize][c];
                    }
                }
            }
            h[t][o] = acc;
        }
    }
    for b in &model.blocks {
        h = block(&h, b);
    }
    let h = layer_norm(
        &h,
        model.final_norm_gamma.as_slice().unwrap(),
        model.final_norm_beta.as_slice().unwrap(),
    );
    let h = dense(
        &h,
        model.pointwise_weight.as_slice().unwrap(),
        model.pointwise_bias.as_slice().unwrap(),
    );
    dense(&h, model.head_weight.as_slice().unwrap(), model.head_bias.as_slice().unwrap())
}
