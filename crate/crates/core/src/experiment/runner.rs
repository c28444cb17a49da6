//! The end-to-end pipeline: data, mitigations, multi-seed training,
//! evaluation and the on-disk result bundle.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{summarize, write_outputs};
use super::spec::{DataSource, DataSpec, EmbeddingSource, ExperimentSpec};
use crate::corpus::{load_tsv, split, synth_corpus, Dataset, LabelScheme, SynthLexicon, Vocabulary};
use crate::embedding::{hard_debias, load_text_embeddings, synthetic_embeddings, DebiasLexicon};
use crate::error::{Error, Result};
use crate::identity::{augment, generate_test_set, FillLexicon, IdentityPairLexicon, Template};
use crate::train::{
    evaluate, fine_tune, init_params, multi_run, train, EvalData, History, MultiRun, RunResult, TrainData,
};

/// Sizes and coverage recorded while preparing an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepInfo {
    pub vocab_size: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub generated: usize,
    pub source_train: Option<usize>,
    pub embedding_coverage: Option<f64>,
}

/// Everything a run needs, shared read-only across seeds.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub vocab: Vocabulary,
    pub target: TrainData,
    pub source: Option<TrainData>,
    pub eval: EvalData,
    /// Initial embedding table; `None` draws a random one per run.
    pub embedding: Option<Vec<f64>>,
    pub info: PrepInfo,
}

fn load_corpus(d: &DataSpec, what: &str) -> Result<Dataset> {
    match d.source {
        DataSource::Synthetic => synth_corpus(&d.synth_config(), &SynthLexicon::default()),
        DataSource::File => load_tsv(&d.path, &LabelScheme::by_name(&d.scheme)?),
        DataSource::None => Err(Error::Config(format!("{what} corpus has no source"))),
    }
}

fn or_default<T>(path: &str, load: impl FnOnce(&str) -> Result<T>, default: impl FnOnce() -> T) -> Result<T> {
    if path.is_empty() {
        Ok(default())
    } else {
        load(path)
    }
}

pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    prepare_with_vocab(spec, None)
}

/// Like [`prepare`], but encodes with `vocab` instead of building one from
/// the training splits. A source corpus (`ft.source`) is loaded whenever it
/// is configured, so its words enter the shared vocabulary even when no
/// fine-tuning happens.
pub fn prepare_with_vocab(spec: &ExperimentSpec, vocab: Option<Vocabulary>) -> Result<Prepared> {
    spec.validate().map_err(|e| e.at_stage("config"))?;
    let stage = |s: &'static str| move |e: Error| e.at_stage(s);

    let mut target = load_corpus(&spec.data, "target")
        .and_then(|d| split(&d, spec.split, spec.split_seed))
        .map_err(stage("data"))?;
    let mut source = if spec.ft.source != DataSource::None {
        Some(
            load_corpus(&spec.ft, "fine-tuning source")
                .and_then(|d| split(&d, spec.split, spec.split_seed))
                .map_err(stage("ft-source"))?,
        )
    } else {
        None
    };

    if spec.mitigation.gender_swap {
        let lex = or_default(&spec.swap_lexicon, |p| IdentityPairLexicon::load(p), IdentityPairLexicon::default_swap)
            .map_err(stage("gender-swap"))?;
        target = augment(&target, &lex);
        source = source.map(|s| augment(&s, &lex));
    }

    let mut train_samples = target.train();
    if let Some(s) = &source {
        train_samples.extend(s.train());
    }
    let vocab = vocab.unwrap_or_else(|| Vocabulary::build(train_samples));
    let dim = spec.model.embedding_dim;

    let (mut matrix, coverage) = match spec.embedding_source {
        EmbeddingSource::Random => (None, None),
        EmbeddingSource::Synthetic => {
            let m = synthetic_embeddings(
                vocab.tokens(),
                dim,
                spec.embedding_seed,
                &SynthLexicon::default(),
                &IdentityPairLexicon::default_swap(),
            )
            .map_err(stage("embedding"))?;
            (Some(m), None)
        }
        EmbeddingSource::File => {
            let loaded = load_text_embeddings(&spec.embedding_path, vocab.tokens(), dim, spec.embedding_seed)
                .map_err(stage("embedding"))?;
            (Some(loaded.matrix), Some(loaded.coverage))
        }
    };
    if spec.mitigation.debias {
        let lex = or_default(&spec.debias_lexicon, |p| DebiasLexicon::load(p), DebiasLexicon::default)
            .map_err(stage("debias"))?;
        let m = matrix.take().expect("validated: debias needs vectors");
        matrix = Some(hard_debias(&m, &lex).map_err(stage("debias"))?);
    }

    let generated = (|| {
        let templates = or_default(&spec.templates, |p| Template::load(p), Template::defaults)?;
        let fill = or_default(&spec.fill_lexicon, |p| FillLexicon::load(p), FillLexicon::default)?;
        let ids = or_default(&spec.identity_lexicon, |p| IdentityPairLexicon::load(p), IdentityPairLexicon::default_test_pairs)?;
        generate_test_set(&templates, &fill, &ids)
    })()
    .map_err(stage("test-set"))?;

    let max_len = spec.model.max_len;
    let target_data = TrainData::encode(target.train(), target.valid(), &vocab, max_len);
    let source_data = source.as_ref().map(|s| TrainData::encode(s.train(), s.valid(), &vocab, max_len));
    let eval = EvalData::encode(target.test(), generated.samples(), &vocab, max_len);
    let info = PrepInfo {
        vocab_size: vocab.len(),
        train: target_data.train.len(),
        valid: target_data.valid.len(),
        test: eval.original.len(),
        generated: eval.generated.len(),
        source_train: source_data.as_ref().map(|s| s.train.len()),
        embedding_coverage: coverage,
    };
    Ok(Prepared {
        spec: spec.clone(),
        vocab,
        target: target_data,
        source: source_data,
        eval,
        embedding: matrix.map(|m| m.into_data()),
        info,
    })
}

/// One seed: initialise, optionally pre-train on the source corpus and
/// fine-tune, then evaluate.
pub fn run_seed(prep: &Prepared, seed: u64) -> Result<RunResult> {
    let spec = &prep.spec;
    let model = &spec.model;
    let tc = crate::train::TrainConfig { seed, ..spec.train.clone() };
    let params = init_params(model, prep.vocab.len(), prep.embedding.as_deref(), seed).map_err(|e| e.at_stage("train"))?;
    let (best, history): (_, History) = match prep.source.as_ref().filter(|_| spec.mitigation.finetune) {
        Some(source) => {
            let (pre, _) = train(model, params, source, &tc).map_err(|e| e.at_stage("ft-pretrain"))?;
            fine_tune(model, &pre, &prep.target, &tc).map_err(|e| e.at_stage("fine-tune"))?
        }
        None => train(model, params, &prep.target, &tc).map_err(|e| e.at_stage("train"))?,
    };
    let report = evaluate(&best.params, model, &prep.eval, spec.threshold).map_err(|e| e.at_stage("evaluate"))?;
    Ok(RunResult { seed, report, history })
}

/// Prepares and trains `train.runs` seeds without touching the disk.
pub fn execute(spec: &ExperimentSpec) -> Result<(Prepared, MultiRun)> {
    let prep = prepare(spec)?;
    let runs = multi_run(spec.train.seed, spec.train.runs, spec.workers, |s| run_seed(&prep, s))?;
    Ok((prep, runs))
}

/// Contents of `runs/NN.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub experiment: String,
    pub arch: String,
    pub mitigation: String,
    pub run: usize,
    #[serde(flatten)]
    pub result: RunResult,
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Runs the experiment and writes `spec.txt`, `runs/NN.json`,
/// `summary.json`, `table.csv` and `plot.tsv`. Work happens in
/// `<out>.partial`, which is renamed to `<out>` on success and left in
/// place (with `error.txt`) on failure.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<PathBuf> {
    let out = spec.output_path();
    let partial = partial_path(&out);
    if partial.exists() {
        fs::remove_dir_all(&partial)?;
    }
    fs::create_dir_all(partial.join("runs"))?;
    fs::write(partial.join("spec.txt"), spec.to_text())?;

    let result = (|| -> Result<()> {
        let prep = prepare(spec)?;
        fs::write(partial.join("prep.json"), serde_json::to_string_pretty(&prep.info)?)?;
        let mitigation = spec.mitigation.label();
        let first = spec.train.seed;
        let multi = multi_run(first, spec.train.runs, spec.workers, |seed| {
            let result = run_seed(&prep, seed)?;
            let index = (seed - first) as usize;
            let file = RunFile {
                experiment: spec.name.clone(),
                arch: spec.model.arch.to_string(),
                mitigation: mitigation.clone(),
                run: index,
                result,
            };
            let path = partial.join("runs").join(format!("{index:02}.json"));
            write_atomic(&path, &serde_json::to_string_pretty(&file)?).map_err(|e| e.at_stage("write"))?;
            Ok(file.result)
        })?;
        let files: Vec<RunFile> = multi
            .runs
            .into_iter()
            .enumerate()
            .map(|(i, result)| RunFile {
                experiment: spec.name.clone(),
                arch: spec.model.arch.to_string(),
                mitigation: mitigation.clone(),
                run: i,
                result,
            })
            .collect();
        write_outputs(&partial, &summarize(&files)).map_err(|e| e.at_stage("write"))
    })();

    match result {
        Ok(()) => {
            if out.exists() {
                fs::remove_dir_all(&out)?;
            }
            fs::rename(&partial, &out)?;
            Ok(out)
        }
        Err(e) => {
            // Best effort: the original error matters more than this write.
            let _ = fs::write(partial.join("error.txt"), format!("{e}\n"));
            Err(e)
        }
    }
}
