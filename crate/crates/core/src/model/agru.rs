//! Bidirectional GRU with additive self-attention pooling.

use super::gru::{backward_sequence, forward_sequence, GruCache, GruGrads};
use super::linalg::{dot, gemm_acc, View};
use super::params::{GradientSet, ParameterSet};
use super::ModelConfig;

const FWD: usize = 1;
const BWD: usize = 5;
const ATT_W: usize = 9;
const ATT_B: usize = 10;
const ATT_V: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AgruTrace {
    xrev: Vec<f64>,
    fwd: GruCache,
    bwd: GruCache,
    /// `len x 2H`, forward then backward state for each position.
    hcat: Vec<f64>,
    /// `len x A`, `tanh(W h + b)`.
    u: Vec<f64>,
    pub alpha: Vec<f64>,
}

fn reversed_rows(x: &[f64], len: usize, d: usize) -> Vec<f64> {
    (0..len).rev().flat_map(|t| x[t * d..(t + 1) * d].iter().copied()).collect()
}

pub(crate) fn forward(params: &ParameterSet, config: &ModelConfig, x: &[f64], len: usize) -> (Vec<f64>, AgruTrace) {
    let d = config.embedding_dim;
    let h = config.agru.hidden_per_direction;
    let a = config.agru.attention_size;
    let fwd_layer = super::gru_layer(params, FWD, d, h);
    let bwd_layer = super::gru_layer(params, BWD, d, h);
    let fwd = forward_sequence(&fwd_layer, x, len);
    let xrev = reversed_rows(x, len, d);
    let bwd = forward_sequence(&bwd_layer, &xrev, len);

    let mut hcat = vec![0.0; len * 2 * h];
    for i in 0..len {
        let row = &mut hcat[i * 2 * h..(i + 1) * 2 * h];
        row[..h].copy_from_slice(fwd.state(i, h));
        row[h..].copy_from_slice(bwd.state(len - 1 - i, h));
    }
    let mut u: Vec<f64> = params.data(ATT_B).iter().copied().cycle().take(len * a).collect();
    gemm_acc(View::new(&hcat, len, 2 * h), View::new(params.data(ATT_W), 2 * h, a), &mut u);
    u.iter_mut().for_each(|v| *v = v.tanh());

    let v = params.data(ATT_V);
    let scores: Vec<f64> = u.chunks_exact(a.max(1)).take(len).map(|ui| dot(ui, v)).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = exp.iter().sum();
    let alpha: Vec<f64> = exp.iter().map(|e| e / total).collect();

    let mut context = vec![0.0; 2 * h];
    for (i, ai) in alpha.iter().enumerate() {
        super::linalg::axpy(*ai, &hcat[i * 2 * h..(i + 1) * 2 * h], &mut context);
    }
    (context, AgruTrace { xrev, fwd, bwd, hcat, u, alpha })
}

fn layer_grads(grads: &mut GradientSet, first: usize) -> GruGrads<'_> {
    let [wx, u_zr, u_h, b] = grads.disjoint_mut([first, first + 1, first + 2, first + 3]);
    GruGrads { wx, u_zr, u_h, b }
}

pub(crate) fn backward(
    params: &ParameterSet,
    config: &ModelConfig,
    x: &[f64],
    trace: &AgruTrace,
    dctx: &[f64],
    grads: &mut GradientSet,
    dx: Option<&mut [f64]>,
) {
    let d = config.embedding_dim;
    let h = config.agru.hidden_per_direction;
    let a = config.agru.attention_size;
    let len = trace.alpha.len();
    if len == 0 {
        return;
    }
    let alpha = &trace.alpha;
    let dalpha: Vec<f64> = (0..len).map(|i| dot(dctx, &trace.hcat[i * 2 * h..(i + 1) * 2 * h])).collect();
    let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
    let de: Vec<f64> = alpha.iter().zip(&dalpha).map(|(a, g)| a * (g - mean)).collect();

    let mut dhcat = vec![0.0; len * 2 * h];
    for i in 0..len {
        super::linalg::axpy(alpha[i], dctx, &mut dhcat[i * 2 * h..(i + 1) * 2 * h]);
    }
    let v = params.data(ATT_V);
    let mut du = vec![0.0; len * a];
    {
        let [dv, db] = grads.disjoint_mut([ATT_V, ATT_B]);
        for i in 0..len {
            let ui = &trace.u[i * a..(i + 1) * a];
            super::linalg::axpy(de[i], ui, dv);
            let row = &mut du[i * a..(i + 1) * a];
            for j in 0..a {
                row[j] = de[i] * v[j] * (1.0 - ui[j] * ui[j]);
            }
            db.iter_mut().zip(row.iter()).for_each(|(b, g)| *b += g);
        }
    }
    gemm_acc(View::new(&trace.hcat, len, 2 * h).t(), View::new(&du, len, a), grads.data_mut(ATT_W));
    gemm_acc(View::new(&du, len, a), View::new(params.data(ATT_W), 2 * h, a).t(), &mut dhcat);

    let mut dhf = vec![0.0; len * h];
    let mut dhb = vec![0.0; len * h];
    for i in 0..len {
        let row = &dhcat[i * 2 * h..(i + 1) * 2 * h];
        dhf[i * h..(i + 1) * h].copy_from_slice(&row[..h]);
        let t = len - 1 - i;
        dhb[t * h..(t + 1) * h].copy_from_slice(&row[h..]);
    }
    let fwd_layer = super::gru_layer(params, FWD, d, h);
    let bwd_layer = super::gru_layer(params, BWD, d, h);
    match dx {
        Some(dx) => {
            backward_sequence(&fwd_layer, x, &trace.fwd, &dhf, layer_grads(grads, FWD), Some(&mut *dx));
            let mut dxrev = vec![0.0; len * d];
            backward_sequence(&bwd_layer, &trace.xrev, &trace.bwd, &dhb, layer_grads(grads, BWD), Some(&mut dxrev));
            for t in 0..len {
                let src = &dxrev[(len - 1 - t) * d..(len - t) * d];
                dx[t * d..(t + 1) * d].iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
        None => {
            backward_sequence(&fwd_layer, x, &trace.fwd, &dhf, layer_grads(grads, FWD), None);
            backward_sequence(&bwd_layer, &trace.xrev, &trace.bwd, &dhb, layer_grads(grads, BWD), None);
        }
    }
}
