//! Gated recurrent unit: single step, whole-sequence forward and
//! backpropagation through time.

use super::linalg::{gemm_acc, mat_vec_acc, outer_acc, sigmoid, vec_mat_acc, View};

/// Borrowed weights of one GRU layer. `wx` is `input x 3H` with gate blocks
/// ordered update, reset, candidate; `u_zr` is `H x 2H`; `u_h` is `H x H`.
#[derive(Debug, Clone, Copy)]
pub struct GruLayer<'a> {
    pub wx: &'a [f64],
    pub u_zr: &'a [f64],
    pub u_h: &'a [f64],
    pub b: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

/// Mutable gradient buffers matching a [`GruLayer`].
pub(crate) struct GruGrads<'a> {
    pub wx: &'a mut [f64],
    pub u_zr: &'a mut [f64],
    pub u_h: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Per-step activations kept for the backward pass; every buffer is
/// `len x H` except `hs`, which is `(len + 1) x H` with a zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GruCache {
    pub len: usize,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub rh: Vec<f64>,
    pub hs: Vec<f64>,
}

impl GruCache {
    pub fn state(&self, t: usize, hidden: usize) -> &[f64] {
        &self.hs[(t + 1) * hidden..(t + 2) * hidden]
    }

    pub fn last(&self, hidden: usize) -> &[f64] {
        &self.hs[self.len * hidden..(self.len + 1) * hidden]
    }
}

/// One update. `xp` is `W x + b` (length 3H); writes gates into the output
/// slices.
#[allow(clippy::too_many_arguments)]
fn step(layer: &GruLayer<'_>, xp: &[f64], h_prev: &[f64], z: &mut [f64], r: &mut [f64], n: &mut [f64], rh: &mut [f64], h: &mut [f64]) {
    let hd = layer.hidden;
    let mut a_zr = xp[..2 * hd].to_vec();
    vec_mat_acc(h_prev, layer.u_zr, &mut a_zr);
    for j in 0..hd {
        z[j] = sigmoid(a_zr[j]);
        r[j] = sigmoid(a_zr[hd + j]);
        rh[j] = r[j] * h_prev[j];
    }
    n.copy_from_slice(&xp[2 * hd..]);
    vec_mat_acc(rh, layer.u_h, n);
    for j in 0..hd {
        n[j] = n[j].tanh();
        h[j] = z[j] * h_prev[j] + (1.0 - z[j]) * n[j];
    }
}

/// `z = s(Wz x + Uz h + bz)`, `r = s(Wr x + Ur h + br)`,
/// `n = tanh(Wh x + Uh (r*h) + bh)`, `h' = z*h + (1-z)*n`.
pub fn gru_step(layer: &GruLayer<'_>, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), layer.input, "input dimension");
    assert_eq!(h_prev.len(), layer.hidden, "hidden dimension");
    let hd = layer.hidden;
    let mut xp = layer.b.to_vec();
    vec_mat_acc(x, layer.wx, &mut xp);
    let (mut z, mut r, mut n, mut rh, mut h) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
    step(layer, &xp, h_prev, &mut z, &mut r, &mut n, &mut rh, &mut h);
    h
}

/// Runs the layer over the `len x input` rows of `x` in order.
pub(crate) fn forward_sequence(layer: &GruLayer<'_>, x: &[f64], len: usize) -> GruCache {
    let (d, hd) = (layer.input, layer.hidden);
    let mut xp: Vec<f64> = layer.b.iter().copied().cycle().take(len * 3 * hd).collect();
    gemm_acc(View::new(&x[..len * d], len, d), View::new(layer.wx, d, 3 * hd), &mut xp);
    let mut c = GruCache {
        len,
        z: vec![0.0; len * hd],
        r: vec![0.0; len * hd],
        n: vec![0.0; len * hd],
        rh: vec![0.0; len * hd],
        hs: vec![0.0; (len + 1) * hd],
    };
    for t in 0..len {
        let (prev, next) = c.hs.split_at_mut((t + 1) * hd);
        let s = t * hd..(t + 1) * hd;
        step(
            layer,
            &xp[t * 3 * hd..(t + 1) * 3 * hd],
            &prev[t * hd..],
            &mut c.z[s.clone()],
            &mut c.r[s.clone()],
            &mut c.n[s.clone()],
            &mut c.rh[s],
            &mut next[..hd],
        );
    }
    c
}

/// Backpropagates `dh` (`len x H`, gradient w.r.t. each emitted state)
/// through the sequence, accumulating into `grads` and, when given, into
/// `dx` (`len x input`).
pub(crate) fn backward_sequence(
    layer: &GruLayer<'_>,
    x: &[f64],
    cache: &GruCache,
    dh: &[f64],
    grads: GruGrads<'_>,
    dx: Option<&mut [f64]>,
) {
    let (d, hd, len) = (layer.input, layer.hidden, cache.len);
    if len == 0 {
        return;
    }
    let mut dxp = vec![0.0; len * 3 * hd];
    let mut carry = vec![0.0; hd];
    let mut g = vec![0.0; hd];
    let mut d_rh = vec![0.0; hd];
    for t in (0..len).rev() {
        let s = t * hd..(t + 1) * hd;
        let (z, r, n, rh) = (&cache.z[s.clone()], &cache.r[s.clone()], &cache.n[s.clone()], &cache.rh[s.clone()]);
        let hp = &cache.hs[s.clone()];
        for j in 0..hd {
            g[j] = dh[t * hd + j] + carry[j];
        }
        let row = &mut dxp[t * 3 * hd..(t + 1) * 3 * hd];
        let (dzr, dn) = row.split_at_mut(2 * hd);
        for j in 0..hd {
            dn[j] = g[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
            dzr[j] = g[j] * (hp[j] - n[j]) * z[j] * (1.0 - z[j]);
            carry[j] = g[j] * z[j];
        }
        outer_acc(rh, dn, grads.u_h);
        d_rh.fill(0.0);
        mat_vec_acc(layer.u_h, dn, &mut d_rh);
        for j in 0..hd {
            dzr[hd + j] = d_rh[j] * hp[j] * r[j] * (1.0 - r[j]);
            carry[j] += d_rh[j] * r[j];
        }
        outer_acc(hp, dzr, grads.u_zr);
        mat_vec_acc(layer.u_zr, dzr, &mut carry);
    }
    for row in dxp.chunks_exact(3 * hd) {
        grads.b.iter_mut().zip(row).for_each(|(b, v)| *b += v);
    }
    gemm_acc(View::new(&x[..len * d], len, d).t(), View::new(&dxp, len, 3 * hd), grads.wx);
    if let Some(dx) = dx {
        gemm_acc(View::new(&dxp, len, 3 * hd), View::new(layer.wx, d, 3 * hd).t(), &mut dx[..len * d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_layer(hd: usize, b: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (vec![0.0; 2 * 3 * hd], vec![0.0; hd * 2 * hd], vec![0.0; hd * hd], b.to_vec())
    }

    #[test]
    fn zero_weights_halve_state() {
        let (wx, uzr, uh, b) = zero_layer(3, &[0.0; 9]);
        let layer = GruLayer { wx: &wx, u_zr: &uzr, u_h: &uh, b: &b, input: 2, hidden: 3 };
        let h = gru_step(&layer, &[0.3, -0.7], &[1.0, -2.0, 0.5]);
        assert_eq!(h, vec![0.5, -1.0, 0.25]);
        assert_eq!(gru_step(&layer, &[0.3, -0.7], &[0.0; 3]), vec![0.0; 3]);
    }

    #[test]
    fn saturated_update_gate_keeps_state() {
        let mut bias = vec![0.0; 9];
        bias[..3].fill(50.0);
        bias[6..].fill(1.0);
        let (wx, uzr, uh, b) = zero_layer(3, &bias);
        let layer = GruLayer { wx: &wx, u_zr: &uzr, u_h: &uh, b: &b, input: 2, hidden: 3 };
        let prev = [0.4, -0.9, 0.1];
        let h = gru_step(&layer, &[1.0, 1.0], &prev);
        for (a, b) in h.iter().zip(prev) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_matches_repeated_steps() {
        let hd = 4;
        let d = 3;
        let wx: Vec<f64> = (0..d * 3 * hd).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.03).collect();
        let uzr: Vec<f64> = (0..hd * 2 * hd).map(|i| ((i * 5 % 13) as f64 - 6.0) * 0.02).collect();
        let uh: Vec<f64> = (0..hd * hd).map(|i| ((i * 3 % 7) as f64 - 3.0) * 0.05).collect();
        let b: Vec<f64> = (0..3 * hd).map(|i| i as f64 * 0.01).collect();
        let layer = GruLayer { wx: &wx, u_zr: &uzr, u_h: &uh, b: &b, input: d, hidden: hd };
        let x: Vec<f64> = (0..5 * d).map(|i| (i as f64).sin()).collect();
        let cache = forward_sequence(&layer, &x, 5);
        let mut h = vec![0.0; hd];
        for t in 0..5 {
            h = gru_step(&layer, &x[t * d..(t + 1) * d], &h);
            for (a, b) in h.iter().zip(cache.state(t, hd)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
