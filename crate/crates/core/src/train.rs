//! Loss, Adam, early stopping, multi-seed runs and bias fine-tuning.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode, EncodedSample, Group, Sample, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{build_report_with, roc_auc, BiasReport, PredictionRecord, ThresholdSource};
use crate::model::{backward_logit_into, forward, predict, GradientSet, Mode, ModelConfig, ParameterSet};

const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub runs: usize,
    pub finetune_lr_multiplier: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            seed: 0,
            runs: 10,
            finetune_lr_multiplier: 0.1,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.runs == 0 {
            return Err(Error::Config("batch_size, max_epochs and runs must be positive".into()));
        }
        if !(self.finetune_lr_multiplier > 0.0 && self.finetune_lr_multiplier <= 1.0) {
            return Err(Error::Config("finetune_lr_multiplier must be in (0, 1]".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Binary cross-entropy and its derivative w.r.t. the probability, with the
/// probability clamped to [1e-7, 1 - 1e-7] first.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    (loss, (p - y) / (p * (1.0 - p)))
}

/// Adam with bias correction; one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParameterSet, lr: f64) -> Adam {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one update; tensors before `first` are left untouched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradientSet, first: usize) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let step_size = self.lr / c1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (i, (t, g)) in params.tensors_mut().iter_mut().zip(grads.tensors()).enumerate().skip(first) {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..t.data.len() {
                let gj = g.data[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                t.data[j] -= step_size * m[j] / ((v[j] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub epoch: usize,
    pub valid_auc: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    epoch: usize,
    valid_auc: f64,
}

impl Checkpoint {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.params.save(dir)?;
        let meta = CheckpointMeta { epoch: self.epoch, valid_auc: self.valid_auc };
        fs::write(dir.join("checkpoint.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Checkpoint> {
        let dir = dir.as_ref();
        let params = ParameterSet::load(dir)?;
        let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join("checkpoint.json"))?)?;
        Ok(Checkpoint { params, epoch: meta.epoch, valid_auc: meta.valid_auc })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_auc: f64,
}

/// Encoded train and validation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub train: Vec<EncodedSample>,
    pub valid: Vec<EncodedSample>,
}

impl TrainData {
    pub fn encode<'a>(
        train: impl IntoIterator<Item = &'a Sample>,
        valid: impl IntoIterator<Item = &'a Sample>,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> TrainData {
        TrainData {
            train: train.into_iter().map(|s| encode(s, vocab, max_len)).collect(),
            valid: valid.into_iter().map(|s| encode(s, vocab, max_len)).collect(),
        }
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Fresh parameters for `seed`, optionally starting from a given embedding
/// table (`vocab_size x embedding_dim`).
pub fn init_params(config: &ModelConfig, vocab_size: usize, embedding: Option<&[f64]>, seed: u64) -> Result<ParameterSet> {
    let mut params = ParameterSet::init(config, vocab_size, &mut init_rng(seed))?;
    if let Some(e) = embedding {
        params.set_embedding(e)?;
    }
    Ok(params)
}

pub fn predict_all(params: &ParameterSet, config: &ModelConfig, samples: &[EncodedSample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| predict(params, config, s)).collect()
}

fn auc_of(params: &ParameterSet, config: &ModelConfig, samples: &[EncodedSample]) -> Result<f64> {
    let records: Vec<PredictionRecord> = predict_all(params, config, samples)?
        .into_iter()
        .zip(samples)
        .map(|(p, s)| PredictionRecord::new(p, s.label, Group::None))
        .collect();
    roc_auc(&records)
}

/// Mini-batch Adam with global-norm clipping. After every epoch the valid
/// AUC is measured; the best parameters are kept and training stops once
/// `patience` epochs pass without improvement.
pub fn train(config: &ModelConfig, params: ParameterSet, data: &TrainData, tc: &TrainConfig) -> Result<(Checkpoint, History)> {
    train_with_lr(config, params, data, tc, tc.learning_rate)
}

fn train_with_lr(
    config: &ModelConfig,
    mut params: ParameterSet,
    data: &TrainData,
    tc: &TrainConfig,
    lr: f64,
) -> Result<(Checkpoint, History)> {
    tc.validate()?;
    params.check_config(config)?;
    if data.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if data.valid.is_empty() {
        return Err(Error::EmptySplit("valid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(&params, lr);
    let mut grads = GradientSet::zeros_like(&params);
    let first = usize::from(config.freeze_embeddings);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut best: Option<Checkpoint> = None;
    let mut epochs = Vec::new();
    let mut stale = 0;

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(tc.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &data.train[i];
                let y = s.label.as_f64();
                let (p, trace) = forward(&params, config, s, Mode::Train, &mut rng)?;
                let (loss, _) = bce_loss(p, y);
                total_loss += loss;
                let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                backward_logit_into(&params, config, &trace, (pc - y) * scale, &mut grads)?;
            }
            let norm = grads.global_norm();
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", grads.first_non_finite().unwrap_or("?"))));
            }
            if norm > tc.clip_norm {
                grads.scale(tc.clip_norm / norm);
            }
            adam.step(&mut params, &grads, first);
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(format!("parameter {name}")));
        }
        let train_loss = total_loss / data.train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        let valid_auc = auc_of(&params, config, &data.valid)?;
        epochs.push(EpochRecord { epoch, train_loss, valid_auc });
        if best.as_ref().is_none_or(|b| valid_auc > b.valid_auc) {
            best = Some(Checkpoint { params: params.clone(), epoch, valid_auc });
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= tc.patience {
            break;
        }
    }
    let best = best.expect("at least one epoch ran");
    let history = History { epochs, best_epoch: best.epoch, best_valid_auc: best.valid_auc };
    Ok((best, history))
}

/// Swaps in a zeroed output head and continues training every
/// parameter on the target data at `learning_rate * finetune_lr_multiplier`.
pub fn fine_tune(config: &ModelConfig, source: &Checkpoint, data: &TrainData, tc: &TrainConfig) -> Result<(Checkpoint, History)> {
    let params = replace_head(config, source)?;
    train_with_lr(config, params, data, tc, tc.learning_rate * tc.finetune_lr_multiplier)
}

/// The source parameters with a new, zeroed output head.
pub fn replace_head(config: &ModelConfig, source: &Checkpoint) -> Result<ParameterSet> {
    if source.params.config().arch != config.arch {
        return Err(Error::Config(format!(
            "source checkpoint is {}, target model is {}",
            source.params.config().arch,
            config.arch
        )));
    }
    source.params.check_config(config)?;
    let mut params = source.params.clone();
    params.reset_head();
    Ok(params)
}

/// Encoded evaluation sets with their identity groups.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalData {
    pub original: Vec<(EncodedSample, Group)>,
    pub generated: Vec<(EncodedSample, Group)>,
}

impl EvalData {
    pub fn encode<'a>(
        original: impl IntoIterator<Item = &'a Sample>,
        generated: impl IntoIterator<Item = &'a Sample>,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> EvalData {
        let enc = |s: &Sample| (encode(s, vocab, max_len), s.group);
        EvalData {
            original: original.into_iter().map(enc).collect(),
            generated: generated.into_iter().map(enc).collect(),
        }
    }
}

pub fn score(params: &ParameterSet, config: &ModelConfig, set: &[(EncodedSample, Group)]) -> Result<Vec<PredictionRecord>> {
    set.iter()
        .map(|(s, g)| predict(params, config, s).map(|p| PredictionRecord::new(p, s.label, *g)))
        .collect()
}

pub fn evaluate(params: &ParameterSet, config: &ModelConfig, eval: &EvalData, source: ThresholdSource) -> Result<BiasReport> {
    let original = score(params, config, &eval.original)?;
    let generated = score(params, config, &eval.generated)?;
    build_report_with(&original, &generated, source)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub report: BiasReport,
    pub history: History,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub orig_auc: Stat,
    pub gen_auc: Stat,
    pub fned: Stat,
    pub fped: Stat,
}

impl Aggregate {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a BiasReport>) -> Aggregate {
        let reports: Vec<&BiasReport> = reports.into_iter().collect();
        let stat = |f: fn(&BiasReport) -> f64| Stat::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        Aggregate {
            orig_auc: stat(|r| r.orig_auc),
            gen_auc: stat(|r| r.gen_auc),
            fned: stat(|r| r.fned),
            fped: stat(|r| r.fped),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRun {
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

/// Calls `run` for seeds `seed .. seed + n` on `workers` threads and
/// aggregates in seed order.
pub fn multi_run<F>(seed: u64, n: usize, workers: usize, run: F) -> Result<MultiRun>
where
    F: Fn(u64) -> Result<RunResult> + Sync,
{
    if n == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| seed + i).collect();
    let results = if workers <= 1 {
        seeds.iter().map(|s| run(*s)).collect::<Result<Vec<_>>>()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(|s| run(*s)).collect::<Result<Vec<_>>>())
    };
    aggregate_runs(results?)
}

pub fn aggregate_runs(mut runs: Vec<RunResult>) -> Result<MultiRun> {
    runs.sort_by_key(|r| r.seed);
    let aggregate = Aggregate::of(runs.iter().map(|r| &r.report));
    Ok(MultiRun { runs, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::model::Arch;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(bce_loss(0.5, 1.0).0, 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(bce_loss(1.0, 1.0).0, 1e-7, epsilon = 1e-12);
        assert_abs_diff_eq!(bce_loss(0.9, 0.0).0, 2.302585, epsilon = 1e-6);
        let (_, g) = bce_loss(0.5, 1.0);
        assert_abs_diff_eq!(g, -2.0, epsilon = 1e-15);
        assert!(bce_loss(0.0, 1.0).0.is_finite());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let config = ModelConfig::toy(Arch::Gru);
        let mut params = ParameterSet::zeros(&config, 3).unwrap();
        let mut grads = GradientSet::zeros_like(&params);
        let last = grads.tensors().len() - 1;
        grads.data_mut(last)[0] = 0.37;
        let mut adam = Adam::new(&params, 0.01);
        adam.step(&mut params, &grads, 0);
        assert_abs_diff_eq!(params.tensors()[last].data[0], -0.01, epsilon = 1e-9);
        assert_eq!(params.tensors()[last - 1].data[0], 0.0);
    }

    /// Token 2 marks positives, token 3 negatives; the rest is noise.
    fn separable(n: usize, seed: u64, max_len: usize) -> Vec<EncodedSample> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let len = rng.random_range(2..max_len);
                let mut idx: Vec<usize> = (0..len).map(|_| rng.random_range(4..12)).collect();
                let at = rng.random_range(0..len);
                idx[at] = if positive { 2 } else { 3 };
                idx.resize(max_len, 0);
                EncodedSample { indices: idx, length: len, label: Label::from(positive) }
            })
            .collect()
    }

    fn small_data() -> TrainData {
        TrainData { train: separable(200, 1, 6), valid: separable(60, 2, 6) }
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let config = ModelConfig::toy(Arch::Gru);
        let tc = TrainConfig { patience: 0, max_epochs: 5, ..TrainConfig::default() };
        let params = init_params(&config, 12, None, 0).unwrap();
        let (_, h) = train(&config, params, &small_data(), &tc).unwrap();
        assert_eq!(h.epochs.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_keeps_best() {
        let config = ModelConfig::toy(Arch::Cnn);
        let tc = TrainConfig { max_epochs: 4, learning_rate: 0.01, ..TrainConfig::default() };
        let data = small_data();
        let run = || train(&config, init_params(&config, 12, None, 5).unwrap(), &data, &tc).unwrap();
        let (c1, h1) = run();
        let (c2, h2) = run();
        assert_eq!(h1, h2);
        assert_eq!(c1, c2);
        let max = h1.epochs.iter().map(|e| e.valid_auc).fold(f64::MIN, f64::max);
        assert_eq!(c1.valid_auc, max);
        assert!(h1.epochs.len() <= tc.max_epochs);
    }

    #[test]
    fn separable_data_is_learned() {
        for arch in Arch::ALL {
            let config = ModelConfig::toy(arch);
            let tc = TrainConfig { max_epochs: 5, learning_rate: 0.01, ..TrainConfig::default() };
            let (best, h) = train(&config, init_params(&config, 12, None, 1).unwrap(), &small_data(), &tc).unwrap();
            assert!(best.valid_auc >= 0.95, "{arch}: {h:?}");
        }
    }

    #[test]
    fn empty_splits_rejected() {
        let config = ModelConfig::toy(Arch::Gru);
        let data = TrainData { train: separable(10, 1, 6), valid: vec![] };
        let params = init_params(&config, 12, None, 0).unwrap();
        assert!(matches!(train(&config, params, &data, &TrainConfig::default()), Err(Error::EmptySplit("valid"))));
    }

    #[test]
    fn head_swap_keeps_body() {
        let config = ModelConfig::toy(Arch::Agru);
        let params = init_params(&config, 12, None, 3).unwrap();
        let source = Checkpoint { params: params.clone(), epoch: 1, valid_auc: 0.5 };
        let swapped = replace_head(&config, &source).unwrap();
        let head = params.head_start();
        for (a, b) in params.tensors()[..head].iter().zip(&swapped.tensors()[..head]) {
            assert_eq!(a, b);
        }
        assert_ne!(params.tensors()[head], swapped.tensors()[head]);
        assert!(swapped.tensors()[head..].iter().all(|t| t.data.iter().all(|&x| x == 0.0)));
        assert!(replace_head(&ModelConfig::toy(Arch::Gru), &source).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = ModelConfig::toy(Arch::Gru);
        let c = Checkpoint { params: init_params(&config, 5, None, 2).unwrap(), epoch: 3, valid_auc: 0.75 };
        c.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), c);
    }

    fn fake_run(seed: u64) -> Result<RunResult> {
        let mut report: BiasReport = serde_json::from_str(
            r#"{"orig_auc":0.9,"gen_auc":0.8,"fned":0.1,"fped":0.2,"threshold":0.5,
                "rates":{"overall":{"fpr":0.1,"fnr":0.1},"groups":{}}}"#,
        )?;
        report.fned = seed as f64 * 0.013;
        report.gen_auc = 1.0 / (seed as f64 + 3.0);
        Ok(RunResult { seed, report, history: History { epochs: vec![], best_epoch: 1, best_valid_auc: 0.5 } })
    }

    #[test]
    fn aggregation_is_order_independent() {
        let forward: Vec<RunResult> = (0..10).map(|s| fake_run(s).unwrap()).collect();
        let mut reversed = forward.clone();
        reversed.reverse();
        let a = aggregate_runs(forward).unwrap();
        let b = aggregate_runs(reversed).unwrap();
        assert_eq!(a, b);
        let fned: Vec<f64> = a.runs.iter().map(|r| r.report.fned).collect();
        let min = fned.iter().copied().fold(f64::MAX, f64::min);
        let max = fned.iter().copied().fold(f64::MIN, f64::max);
        assert!(a.aggregate.fned.mean >= min && a.aggregate.fned.mean <= max);

        let single = multi_run(4, 1, 1, fake_run).unwrap();
        assert_eq!(single.aggregate.fned.mean, single.runs[0].report.fned);
        assert_eq!(single.aggregate.fned.std, 0.0);
        assert_eq!(multi_run(0, 3, 2, fake_run).unwrap().runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
