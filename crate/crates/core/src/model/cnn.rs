//! Convolution over word windows with ReLU and max-over-time pooling.

use super::linalg::{gemm_acc, View};
use super::params::{GradientSet, ParameterSet};
use super::ModelConfig;

/// For each pooled feature, the window position that won the max, or
/// `None` when the feature is zero (no positive activation or the sequence
/// is shorter than the filter).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CnnTrace {
    pub argmax: Vec<Option<usize>>,
}

pub(crate) fn forward(params: &ParameterSet, config: &ModelConfig, x: &[f64], len: usize) -> (Vec<f64>, CnnTrace) {
    let d = config.embedding_dim;
    let f = config.cnn.feature_maps;
    let widths = &config.cnn.filter_widths;
    let mut features = vec![0.0; f * widths.len()];
    let mut argmax = vec![None; f * widths.len()];
    for (wi, &k) in widths.iter().enumerate() {
        if len < k {
            continue;
        }
        let (w, b) = (params.data(1 + 2 * wi), params.data(2 + 2 * wi));
        let positions = len - k + 1;
        let mut conv: Vec<f64> = b.iter().copied().cycle().take(positions * f).collect();
        // Overlapping windows: row p starts at token p and spans k rows of x.
        let windows = View { data: &x[..len * d], rows: positions, cols: k * d, row_stride: d, col_stride: 1 };
        gemm_acc(windows, View::new(w, k * d, f), &mut conv);
        for j in 0..f {
            let mut best = 0.0;
            let mut at = None;
            for p in 0..positions {
                let v = conv[p * f + j];
                if v > best {
                    best = v;
                    at = Some(p);
                }
            }
            features[wi * f + j] = best;
            argmax[wi * f + j] = at;
        }
    }
    (features, CnnTrace { argmax })
}

pub(crate) fn backward(
    params: &ParameterSet,
    config: &ModelConfig,
    x: &[f64],
    trace: &CnnTrace,
    dfeat: &[f64],
    grads: &mut GradientSet,
    mut dx: Option<&mut [f64]>,
) {
    let d = config.embedding_dim;
    let f = config.cnn.feature_maps;
    for (wi, &k) in config.cnn.filter_widths.iter().enumerate() {
        let w = params.data(1 + 2 * wi);
        let [dw, db] = grads.disjoint_mut([1 + 2 * wi, 2 + 2 * wi]);
        for j in 0..f {
            let Some(p) = trace.argmax[wi * f + j] else { continue };
            let g = dfeat[wi * f + j];
            if g == 0.0 {
                continue;
            }
            db[j] += g;
            let window = &x[p * d..(p + k) * d];
            for (i, xi) in window.iter().enumerate() {
                dw[i * f + j] += g * xi;
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dwin = &mut dx[p * d..(p + k) * d];
                for (i, v) in dwin.iter_mut().enumerate() {
                    *v += g * w[i * f + j];
                }
            }
        }
    }
}
