//! CNN, GRU and attention-GRU classifiers with exact reverse-mode gradients.

mod agru;
mod cnn;
mod gru;
pub mod linalg;
mod params;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedSample;
use crate::error::{Error, Result};

pub use gru::{gru_step, GruLayer};
pub use params::{GradientSet, ParameterSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Cnn,
    Gru,
    Agru,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Cnn, Arch::Gru, Arch::Agru];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Cnn => "cnn",
            Arch::Gru => "gru",
            Arch::Agru => "agru",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Arch> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Arch::Cnn),
            "gru" => Ok(Arch::Gru),
            "agru" | "alpha-gru" | "α-gru" => Ok(Arch::Agru),
            other => Err(Error::Config(format!("unknown architecture {other:?} (cnn, gru, agru)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruConfig {
    pub hidden: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgruConfig {
    pub hidden_per_direction: usize,
    pub attention_size: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub embedding_dim: usize,
    pub max_len: usize,
    pub cnn: CnnConfig,
    pub gru: GruConfig,
    pub agru: AgruConfig,
    /// Keep the embedding table fixed during training.
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Gru,
            embedding_dim: 300,
            max_len: 100,
            cnn: CnnConfig { filter_widths: vec![3, 4, 5], feature_maps: 100, dropout: 0.5 },
            gru: GruConfig { hidden: 512, dropout: 0.3 },
            agru: AgruConfig { hidden_per_direction: 256, attention_size: 512, dropout: 0.3 },
            freeze_embeddings: false,
        }
    }
}

impl ModelConfig {
    pub fn new(arch: Arch) -> ModelConfig {
        ModelConfig { arch, ..ModelConfig::default() }
    }

    /// Laptop-scale sizes: 16 feature maps per width, 64 recurrent units
    /// (32 per direction for the attention model).
    pub fn reduced(arch: Arch) -> ModelConfig {
        let mut c = ModelConfig::new(arch);
        c.cnn.feature_maps = 16;
        c.gru.hidden = 64;
        c.agru.hidden_per_direction = 32;
        c.agru.attention_size = 64;
        c
    }

    /// Tiny sizes for gradient checks.
    pub fn toy(arch: Arch) -> ModelConfig {
        ModelConfig {
            arch,
            embedding_dim: 8,
            max_len: 6,
            cnn: CnnConfig { filter_widths: vec![2, 3], feature_maps: 8, dropout: 0.5 },
            gru: GruConfig { hidden: 8, dropout: 0.3 },
            agru: AgruConfig { hidden_per_direction: 8, attention_size: 8, dropout: 0.3 },
            freeze_embeddings: false,
        }
    }

    pub fn dropout(&self) -> f64 {
        match self.arch {
            Arch::Cnn => self.cnn.dropout,
            Arch::Gru => self.gru.dropout,
            Arch::Agru => self.agru.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("max_len", self.max_len),
            ("cnn.feature_maps", self.cnn.feature_maps),
            ("gru.hidden", self.gru.hidden),
            ("agru.hidden_per_direction", self.agru.hidden_per_direction),
            ("agru.attention_size", self.agru.attention_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.cnn.filter_widths.is_empty() || self.cnn.filter_widths.contains(&0) {
            return Err(Error::Config("cnn.filter_widths must be nonempty and positive".into()));
        }
        let mut widths = self.cnn.filter_widths.clone();
        widths.sort_unstable();
        widths.dedup();
        if widths.len() != self.cnn.filter_widths.len() {
            return Err(Error::Config("cnn.filter_widths must be distinct".into()));
        }
        for (name, rate) in [("cnn", self.cnn.dropout), ("gru", self.gru.dropout), ("agru", self.agru.dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name}.dropout must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout multipliers: 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`. All ones in eval mode.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: f64, mode: Mode, rng: &mut R) -> Vec<f64> {
    if mode == Mode::Eval || rate == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random_bool(rate) { 0.0 } else { keep }).collect()
}

pub fn dropout_apply<R: Rng + ?Sized>(x: &[f64], rate: f64, mode: Mode, rng: &mut R) -> Vec<f64> {
    let mask = dropout_mask(x.len(), rate, mode, rng);
    x.iter().zip(mask).map(|(a, m)| a * m).collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    Cnn(cnn::CnnTrace),
    Gru(gru::GruCache),
    Agru(agru::AgruTrace),
}

/// Activations from one forward pass, consumed by [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    arch: Arch,
    tokens: Vec<usize>,
    x: Vec<f64>,
    mask: Vec<f64>,
    /// Pooled representation after dropout.
    dropped: Vec<f64>,
    prob: f64,
    inner: Inner,
}

impl ForwardTrace {
    pub fn probability(&self) -> f64 {
        self.prob
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    /// Attention weights over the unpadded positions (attention model only).
    pub fn attention(&self) -> Option<&[f64]> {
        match &self.inner {
            Inner::Agru(t) => Some(&t.alpha),
            _ => None,
        }
    }
}

fn gru_layer(params: &ParameterSet, first: usize, input: usize, hidden: usize) -> GruLayer<'_> {
    GruLayer {
        wx: params.data(first),
        u_zr: params.data(first + 1),
        u_h: params.data(first + 2),
        b: params.data(first + 3),
        input,
        hidden,
    }
}

/// Returns the abusive-class probability and the trace for [`backward`].
/// Only the first `sample.length` tokens are read.
pub fn forward<R: Rng + ?Sized>(
    params: &ParameterSet,
    config: &ModelConfig,
    sample: &EncodedSample,
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, ForwardTrace)> {
    params.check_config(config)?;
    let len = sample.length.min(config.max_len);
    if len > sample.indices.len() {
        return Err(Error::Shape(format!("length {} exceeds {} indices", sample.length, sample.indices.len())));
    }
    let tokens = sample.indices[..len].to_vec();
    let d = config.embedding_dim;
    let emb = params.embedding();
    let mut x = Vec::with_capacity(len * d);
    for &t in &tokens {
        if t >= params.vocab_size() {
            return Err(Error::Shape(format!("token index {t} outside vocabulary of {}", params.vocab_size())));
        }
        x.extend_from_slice(&emb[t * d..(t + 1) * d]);
    }

    let (features, inner, what) = match config.arch {
        Arch::Cnn => {
            let (f, t) = cnn::forward(params, config, &x, len);
            (f, Inner::Cnn(t), "cnn pooled features")
        }
        Arch::Gru => {
            let layer = gru_layer(params, 1, d, config.gru.hidden);
            let cache = gru::forward_sequence(&layer, &x, len);
            (cache.last(config.gru.hidden).to_vec(), Inner::Gru(cache), "gru final hidden state")
        }
        Arch::Agru => {
            let (c, t) = agru::forward(params, config, &x, len);
            (c, Inner::Agru(t), "attention context")
        }
    };
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    let mask = dropout_mask(features.len(), config.dropout(), mode, rng);
    let dropped: Vec<f64> = features.iter().zip(&mask).map(|(f, m)| f * m).collect();
    let head = params.head_start();
    let logit = linalg::dot(params.data(head), &dropped) + params.data(head + 1)[0];
    if !logit.is_finite() {
        return Err(Error::NonFinite("output logit".into()));
    }
    let prob = linalg::sigmoid(logit);
    Ok((prob, ForwardTrace { arch: config.arch, tokens, x, mask, dropped, prob, inner }))
}

/// Eval-mode probability.
pub fn predict(params: &ParameterSet, config: &ModelConfig, sample: &EncodedSample) -> Result<f64> {
    // Eval mode never draws from the generator.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    forward(params, config, sample, Mode::Eval, &mut rng).map(|(p, _)| p)
}

/// Gradient of a scalar loss given `d loss / d probability`.
pub fn backward(params: &ParameterSet, config: &ModelConfig, trace: &ForwardTrace, upstream: f64) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    backward_into(params, config, trace, upstream, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into `grads`.
pub fn backward_into(
    params: &ParameterSet,
    config: &ModelConfig,
    trace: &ForwardTrace,
    upstream: f64,
    grads: &mut GradientSet,
) -> Result<()> {
    let p = trace.prob;
    backward_logit_into(params, config, trace, upstream * p * (1.0 - p), grads)
}

/// Accumulates gradients given `d loss / d logit`, which stays informative
/// when the sigmoid saturates.
pub fn backward_logit_into(
    params: &ParameterSet,
    config: &ModelConfig,
    trace: &ForwardTrace,
    dlogit: f64,
    grads: &mut GradientSet,
) -> Result<()> {
    params.check_config(config)?;
    if trace.arch != config.arch {
        return Err(Error::Shape(format!("trace from {} model, config is {}", trace.arch, config.arch)));
    }
    if grads.tensors().len() != params.tensors().len() {
        return Err(Error::Shape("gradient set does not match parameters".into()));
    }
    if trace.tokens.iter().any(|t| *t >= params.vocab_size()) {
        return Err(Error::Shape("trace tokens outside the vocabulary".into()));
    }
    if dlogit == 0.0 {
        return Ok(());
    }
    let head = params.head_start();
    {
        let [dw, db] = grads.disjoint_mut([head, head + 1]);
        linalg::axpy(dlogit, &trace.dropped, dw);
        db[0] += dlogit;
    }
    let dfeat: Vec<f64> = params.data(head).iter().zip(&trace.mask).map(|(w, m)| dlogit * w * m).collect();

    let d = config.embedding_dim;
    let len = trace.tokens.len();
    let mut dx = if config.freeze_embeddings { None } else { Some(vec![0.0; len * d]) };
    match &trace.inner {
        Inner::Cnn(t) => cnn::backward(params, config, &trace.x, t, &dfeat, grads, dx.as_deref_mut()),
        Inner::Gru(cache) => {
            let h = config.gru.hidden;
            if len > 0 {
                let mut dh = vec![0.0; len * h];
                dh[(len - 1) * h..].copy_from_slice(&dfeat);
                let layer = gru_layer(params, 1, d, h);
                let [wx, u_zr, u_h, b] = grads.disjoint_mut([1, 2, 3, 4]);
                gru::backward_sequence(&layer, &trace.x, cache, &dh, gru::GruGrads { wx, u_zr, u_h, b }, dx.as_deref_mut());
            }
        }
        Inner::Agru(t) => agru::backward(params, config, &trace.x, t, &dfeat, grads, dx.as_deref_mut()),
    }
    if let Some(dx) = dx {
        let demb = grads.data_mut(0);
        for (i, &tok) in trace.tokens.iter().enumerate() {
            demb[tok * d..(tok + 1) * d]
                .iter_mut()
                .zip(&dx[i * d..(i + 1) * d])
                .for_each(|(g, v)| *g += v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(indices: &[usize], max_len: usize, label: Label) -> EncodedSample {
        let mut idx = indices.to_vec();
        idx.resize(max_len, crate::corpus::PAD);
        EncodedSample { indices: idx, length: indices.len(), label }
    }

    fn bce(p: f64, y: f64) -> f64 {
        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    }

    /// Loss under a fixed dropout mask: the generator is re-seeded on every
    /// call so train-mode masks repeat.
    fn loss(params: &ParameterSet, config: &ModelConfig, s: &EncodedSample) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (p, _) = forward(params, config, s, Mode::Train, &mut rng).unwrap();
        bce(p, s.label.as_f64())
    }

    fn grad_check(arch: Arch) {
        let config = ModelConfig::toy(arch);
        let vocab = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParameterSet::init(&config, vocab, &mut rng).unwrap();
        // Larger weights than the default init so every path carries signal.
        for t in params.tensors_mut() {
            let scale = if t.name == "embedding" { 2.0 } else { 6.0 };
            t.data.iter_mut().for_each(|v| *v = *v * scale + rng.random_range(-0.05..0.05));
        }
        let s = sample(&[3, 5, 3, 7, 2, 9], config.max_len, Label::Abusive);
        let mut frng = ChaCha8Rng::seed_from_u64(77);
        let (p, trace) = forward(&params, &config, &s, Mode::Train, &mut frng).unwrap();
        let grads = backward(&params, &config, &trace, (p - 1.0) / (p * (1.0 - p))).unwrap();

        let h = 1e-5;
        let mut worst = 0.0f64;
        for ti in 0..params.tensors().len() {
            for j in 0..params.tensors()[ti].data.len() {
                let orig = params.tensors()[ti].data[j];
                params.tensors_mut()[ti].data[j] = orig + h;
                let up = loss(&params, &config, &s);
                params.tensors_mut()[ti].data[j] = orig - h;
                let down = loss(&params, &config, &s);
                params.tensors_mut()[ti].data[j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.tensors()[ti].data[j];
                let scale = analytic.abs().max(numeric.abs());
                if scale < 1e-7 {
                    assert!((analytic - numeric).abs() < 1e-9, "{} [{j}]: {analytic} vs {numeric}", params.tensors()[ti].name);
                    continue;
                }
                let rel = (analytic - numeric).abs() / scale;
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{arch} {} [{j}]: analytic {analytic} numeric {numeric}", params.tensors()[ti].name);
            }
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences_cnn() {
        grad_check(Arch::Cnn);
    }

    #[test]
    fn gradients_match_finite_differences_gru() {
        grad_check(Arch::Gru);
    }

    #[test]
    fn gradients_match_finite_differences_agru() {
        grad_check(Arch::Agru);
    }

    #[test]
    fn zero_network_outputs_half() {
        for arch in Arch::ALL {
            let config = ModelConfig::toy(arch);
            let params = ParameterSet::zeros(&config, 5).unwrap();
            let s = sample(&[1, 2, 3, 4], config.max_len, Label::NonAbusive);
            assert_eq!(predict(&params, &config, &s).unwrap(), 0.5);
        }
    }

    #[test]
    fn padding_and_unused_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for arch in Arch::ALL {
            let mut config = ModelConfig::toy(arch);
            let params = ParameterSet::init(&config, 10, &mut rng).unwrap();
            let short = sample(&[4, 5, 6], config.max_len, Label::Abusive);
            let p1 = predict(&params, &config, &short).unwrap();
            config.max_len = 6;
            let mut padded = short.clone();
            padded.indices[4] = 8; // beyond the true length
            assert_eq!(predict(&params, &config, &padded).unwrap(), p1);

            let (_, trace) = forward(&params, &config, &short, Mode::Eval, &mut rng).unwrap();
            let g = backward(&params, &config, &trace, 1.0).unwrap();
            let emb = &g.tensors()[0].data;
            let d = config.embedding_dim;
            assert!(emb[8 * d..9 * d].iter().all(|v| *v == 0.0));
            assert!(emb[4 * d..5 * d].iter().any(|v| *v != 0.0));
            assert!(backward(&params, &config, &trace, 0.0).unwrap().is_zero());
        }
    }

    #[test]
    fn attention_normalised_and_uniform_on_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let config = ModelConfig::toy(Arch::Agru);
        let params = ParameterSet::init(&config, 10, &mut rng).unwrap();
        let s = sample(&[1, 2, 3, 4, 5], config.max_len, Label::Abusive);
        let (_, trace) = forward(&params, &config, &s, Mode::Eval, &mut rng).unwrap();
        let alpha = trace.attention().unwrap();
        assert_eq!(alpha.len(), 5);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let mut flat = params.clone();
        flat.get_mut("att.v").unwrap().data.fill(0.0);
        let (_, trace) = forward(&flat, &config, &s, Mode::Eval, &mut rng).unwrap();
        assert!(trace.attention().unwrap().iter().all(|a| (a - 0.2).abs() < 1e-15));
    }

    #[test]
    fn empty_sequences_are_defined() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for arch in Arch::ALL {
            let config = ModelConfig::toy(arch);
            let mut params = ParameterSet::init(&config, 6, &mut rng).unwrap();
            params.get_mut("out.b").unwrap().data[0] = 0.3;
            let s = sample(&[], config.max_len, Label::Abusive);
            let p = predict(&params, &config, &s).unwrap();
            assert!((p - linalg::sigmoid(0.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn cnn_short_input_zeroes_wide_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let config = ModelConfig::toy(Arch::Cnn);
        let params = ParameterSet::init(&config, 6, &mut rng).unwrap();
        let s = sample(&[1, 2], config.max_len, Label::Abusive);
        let (_, trace) = forward(&params, &config, &s, Mode::Eval, &mut rng).unwrap();
        // width 3 features are the second block
        assert!(trace.dropped[8..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_is_deterministic_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let config = ModelConfig::toy(Arch::Gru);
        let params = ParameterSet::init(&config, 6, &mut rng).unwrap();
        let s = sample(&[1, 2, 5], config.max_len, Label::Abusive);
        let a = predict(&params, &config, &s).unwrap();
        assert_eq!(a.to_bits(), predict(&params, &config, &s).unwrap().to_bits());
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn dropout_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = vec![1.0; 100_000];
        assert_eq!(dropout_apply(&x, 0.0, Mode::Train, &mut rng), x);
        assert_eq!(dropout_apply(&x, 0.5, Mode::Eval, &mut rng), x);
        let y = dropout_apply(&x, 0.5, Mode::Train, &mut rng);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert!(y.iter().all(|v| *v == 0.0 || *v == 2.0));
    }

    #[test]
    fn frozen_embeddings_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut config = ModelConfig::toy(Arch::Gru);
        config.freeze_embeddings = true;
        let params = ParameterSet::init(&config, 6, &mut rng).unwrap();
        let s = sample(&[1, 2, 5], config.max_len, Label::Abusive);
        let (_, trace) = forward(&params, &config, &s, Mode::Eval, &mut rng).unwrap();
        let g = backward(&params, &config, &trace, 1.0).unwrap();
        assert!(g.tensors()[0].data.iter().all(|v| *v == 0.0));
        assert!(g.get("gru.wx").unwrap().data.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn mismatched_trace_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let gru = ModelConfig::toy(Arch::Gru);
        let params = ParameterSet::init(&gru, 6, &mut rng).unwrap();
        let s = sample(&[1, 2], gru.max_len, Label::Abusive);
        let (_, trace) = forward(&params, &gru, &s, Mode::Eval, &mut rng).unwrap();
        assert!(backward(&params, &ModelConfig::toy(Arch::Cnn), &trace, 1.0).is_err());
        let bad = sample(&[1, 99], gru.max_len, Label::Abusive);
        assert!(forward(&params, &gru, &bad, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn arch_names_parse() {
        for a in Arch::ALL {
            assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
        }
        assert_eq!("alpha-gru".parse::<Arch>().unwrap(), Arch::Agru);
        assert!("lstm".parse::<Arch>().is_err());
    }
}
