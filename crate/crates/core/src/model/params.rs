//! Named parameter tensors, their gradients and the on-disk checkpoint format.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::{Arch, ModelConfig};
use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.txt";
const PAYLOAD: &str = "params.bin";
const MAGIC: &str = "gbias-parameters 1";
const EMBED_INIT: f64 = 0.25;
const RECURRENT_INIT: f64 = 0.08;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor { name: name.to_string(), shape, data: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Embedding,
    Recurrent,
    Glorot { fan_in: usize, fan_out: usize },
    Zero,
}

fn gru_layout(prefix: &str, input: usize, hidden: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    out.push((format!("{prefix}.wx"), vec![input, 3 * hidden], Init::Recurrent));
    out.push((format!("{prefix}.u_zr"), vec![hidden, 2 * hidden], Init::Recurrent));
    out.push((format!("{prefix}.u_h"), vec![hidden, hidden], Init::Recurrent));
    out.push((format!("{prefix}.b"), vec![3 * hidden], Init::Zero));
}

/// Tensor names, shapes and initialisers, in storage order. The embedding is
/// always first and the output head (`out.w`, `out.b`) always last.
fn layout(config: &ModelConfig, vocab_size: usize) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.embedding_dim;
    let mut out = vec![("embedding".to_string(), vec![vocab_size, d], Init::Embedding)];
    let features = match config.arch {
        Arch::Cnn => {
            let f = config.cnn.feature_maps;
            for k in &config.cnn.filter_widths {
                out.push((format!("conv{k}.w"), vec![k * d, f], Init::Glorot { fan_in: k * d, fan_out: f }));
                out.push((format!("conv{k}.b"), vec![f], Init::Zero));
            }
            f * config.cnn.filter_widths.len()
        }
        Arch::Gru => {
            gru_layout("gru", d, config.gru.hidden, &mut out);
            config.gru.hidden
        }
        Arch::Agru => {
            let h = config.agru.hidden_per_direction;
            let a = config.agru.attention_size;
            gru_layout("fwd", d, h, &mut out);
            gru_layout("bwd", d, h, &mut out);
            out.push(("att.w".into(), vec![2 * h, a], Init::Recurrent));
            out.push(("att.b".into(), vec![a], Init::Zero));
            out.push(("att.v".into(), vec![a], Init::Recurrent));
            2 * h
        }
    };
    out.push(("out.w".into(), vec![features], Init::Glorot { fan_in: features, fan_out: 1 }));
    out.push(("out.b".into(), vec![1], Init::Zero));
    out
}

fn fill<R: Rng + ?Sized>(data: &mut [f64], init: Init, rng: &mut R) {
    let limit = match init {
        Init::Zero => {
            data.fill(0.0);
            return;
        }
        Init::Embedding => EMBED_INIT,
        Init::Recurrent => RECURRENT_INIT,
        Init::Glorot { fan_in, fan_out } => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    data.iter_mut().for_each(|x| *x = rng.random_range(-limit..=limit));
}

/// All trainable weights of one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    config: ModelConfig,
    vocab_size: usize,
    tensors: Vec<Tensor>,
}

impl ParameterSet {
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Result<ParameterSet> {
        config.validate()?;
        let tensors = layout(config, vocab_size)
            .into_iter()
            .map(|(name, shape, _)| Tensor::zeros(&name, shape))
            .collect();
        Ok(ParameterSet { config: config.clone(), vocab_size, tensors })
    }

    /// Embedding uniform in [-0.25, 0.25]; recurrent and attention weights
    /// uniform in [-0.08, 0.08]; convolution and affine weights Glorot
    /// uniform; biases zero.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, vocab_size: usize, rng: &mut R) -> Result<ParameterSet> {
        let mut p = ParameterSet::zeros(config, vocab_size)?;
        let inits: Vec<Init> = layout(config, vocab_size).into_iter().map(|(_, _, i)| i).collect();
        for (t, init) in p.tensors.iter_mut().zip(inits) {
            fill(&mut t.data, init, rng);
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub(crate) fn data(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }

    pub fn embedding(&self) -> &[f64] {
        &self.tensors[0].data
    }

    /// Replaces the embedding table with `data` (`vocab_size x dim`).
    pub fn set_embedding(&mut self, data: &[f64]) -> Result<()> {
        let t = &mut self.tensors[0];
        if data.len() != t.data.len() {
            return Err(Error::Shape(format!(
                "embedding has {} values, expected {}",
                data.len(),
                t.data.len()
            )));
        }
        t.data.copy_from_slice(data);
        Ok(())
    }

    /// Index of the first output-head tensor.
    pub fn head_start(&self) -> usize {
        self.tensors.len() - 2
    }

    /// Fresh output head, initialised as in [`ParameterSet::init`].
    /// Zeroes the output head. A zero head passes no gradient into the body
    /// until it has learned something, so pretrained features are not
    /// scrambled by a random projection during the first fine-tuning steps.
    pub fn reset_head(&mut self) {
        let start = self.head_start();
        for t in &mut self.tensors[start..] {
            t.data.fill(0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|x| !x.is_finite()))
            .map(|t| t.name.as_str())
    }

    /// Errors unless `config` describes exactly these tensors.
    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        let want = layout(config, self.vocab_size);
        let same = want.len() == self.tensors.len()
            && want.iter().zip(&self.tensors).all(|((n, s, _), t)| *n == t.name && *s == t.shape);
        if same {
            Ok(())
        } else {
            Err(Error::Shape("parameters do not match the model configuration".into()))
        }
    }

    /// Writes `manifest.txt` (one `tensor name f64 shape` line per tensor)
    /// and `params.bin` (little-endian f64 payload in manifest order) into
    /// `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str(MAGIC);
        manifest.push('\n');
        manifest.push_str(&format!("config {}\n", serde_json::to_string(&self.config)?));
        manifest.push_str(&format!("vocab_size {}\n", self.vocab_size));
        for t in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(|s| s.to_string()).collect();
            manifest.push_str(&format!("tensor {} f64 {}\n", t.name, shape.join("x")));
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        let mut out = BufWriter::new(fs::File::create(dir.join(PAYLOAD))?);
        for t in &self.tensors {
            for x in &t.data {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<ParameterSet> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST);
        let manifest = fs::read_to_string(&manifest_path)?;
        let mut lines = manifest.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::parse(&manifest_path, line + 1, msg);
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(0, "not a parameter manifest")),
        }
        let (i, line) = lines.next().ok_or_else(|| bad(1, "missing config"))?;
        let config: ModelConfig = serde_json::from_str(line.strip_prefix("config ").ok_or_else(|| bad(i, "missing config"))?)?;
        let (i, line) = lines.next().ok_or_else(|| bad(2, "missing vocab_size"))?;
        let vocab_size: usize = line
            .strip_prefix("vocab_size ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(i, "missing vocab_size"))?;
        let mut params = ParameterSet::zeros(&config, vocab_size)?;
        let mut declared = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            let t = params.tensors.get(declared).ok_or_else(|| bad(i, "more tensors than the configuration has"))?;
            let shape: Vec<usize> = fields
                .get(3)
                .map(|s| s.split('x').map(|d| d.parse().unwrap_or(usize::MAX)).collect())
                .unwrap_or_default();
            if fields.len() != 4 || fields[0] != "tensor" || fields[2] != "f64" || fields[1] != t.name || shape != t.shape {
                return Err(bad(i, &format!("expected tensor {} with shape {:?}", t.name, t.shape)));
            }
            declared += 1;
        }
        if declared != params.tensors.len() {
            return Err(Error::Shape(format!("manifest lists {declared} of {} tensors", params.tensors.len())));
        }
        let mut bytes = Vec::new();
        fs::File::open(dir.join(PAYLOAD))?.read_to_end(&mut bytes)?;
        if bytes.len() != params.len() * 8 {
            return Err(Error::Shape(format!("payload has {} bytes, expected {}", bytes.len(), params.len() * 8)));
        }
        let mut chunks = bytes.chunks_exact(8);
        for t in &mut params.tensors {
            for x in &mut t.data {
                *x = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
            }
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(format!("checkpoint tensor {name}")));
        }
        Ok(params)
    }
}

/// Gradients with the same named-tensor layout as a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    tensors: Vec<Tensor>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParameterSet) -> GradientSet {
        GradientSet {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(&t.name, t.shape.clone())).collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn data_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.tensors[i].data
    }

    pub(crate) fn disjoint_mut<const N: usize>(&mut self, idx: [usize; N]) -> [&mut Vec<f64>; N] {
        self.tensors
            .get_disjoint_mut(idx)
            .expect("distinct tensor indices")
            .map(|t| &mut t.data)
    }

    pub fn clear(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.data.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut()).for_each(|x| *x *= factor);
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| *x == 0.0))
    }

    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|x| !x.is_finite()))
            .map(|t| t.name.as_str())
    }
}
