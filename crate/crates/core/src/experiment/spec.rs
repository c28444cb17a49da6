//! Experiment description as flat `section.key=value` text.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::{SplitFractions, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::ThresholdSource;
use crate::model::{Arch, ModelConfig};
use crate::train::TrainConfig;

/// Environment variable naming the default parent directory for outputs.
pub const OUTPUT_ROOT_ENV: &str = "GBIAS_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    None,
    Synthetic,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthPreset {
    /// Small corpus with a strong female/positive association.
    Sexist,
    /// Larger, gender-neutral corpus.
    Abusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Random,
    Synthetic,
    File,
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident = $name:literal $(| $alias:literal)*),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),* })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name $(| $alias)* => Ok($ty::$variant),)*
                    other => Err(Error::Config(format!(
                        "{other:?} is not one of: {}", [$($name),*].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(DataSource { None = "none", Synthetic = "synthetic", File = "file" });
string_enum!(SynthPreset { Sexist = "st" | "sexist", Abusive = "abt" | "abusive" });
string_enum!(EmbeddingSource { Random = "random", Synthetic = "synthetic", File = "file" });

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub source: DataSource,
    pub path: String,
    pub scheme: String,
    pub preset: SynthPreset,
    pub size: usize,
    pub correlation: f64,
    pub seed: u64,
}

impl DataSpec {
    pub fn synth_config(&self) -> SynthConfig {
        let mut c = match self.preset {
            SynthPreset::Sexist => SynthConfig::sexist_like(self.size, self.seed),
            SynthPreset::Abusive => SynthConfig::abusive_like(self.size, self.seed),
        };
        c.identity_label_correlation = self.correlation;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mitigation {
    pub debias: bool,
    pub gender_swap: bool,
    pub finetune: bool,
}

impl Mitigation {
    /// `DE+GS+FT`-style label; `none` when nothing is applied.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.debias, "DE"), (self.gender_swap, "GS"), (self.finetune, "FT")]
            .into_iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| n)
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataSpec,
    pub split: SplitFractions,
    pub split_seed: u64,
    pub ft: DataSpec,
    pub mitigation: Mitigation,
    pub embedding_source: EmbeddingSource,
    pub embedding_path: String,
    pub embedding_seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub threshold: ThresholdSource,
    pub templates: String,
    pub fill_lexicon: String,
    pub identity_lexicon: String,
    pub swap_lexicon: String,
    pub debias_lexicon: String,
    pub output_dir: String,
    pub workers: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            data: DataSpec {
                source: DataSource::Synthetic,
                path: String::new(),
                scheme: "binary".into(),
                preset: SynthPreset::Sexist,
                size: 5000,
                correlation: 0.8,
                seed: 0,
            },
            split: SplitFractions::default(),
            split_seed: 0,
            ft: DataSpec {
                source: DataSource::None,
                path: String::new(),
                scheme: "binary".into(),
                preset: SynthPreset::Abusive,
                size: 5000,
                correlation: 0.0,
                seed: 1,
            },
            mitigation: Mitigation { debias: false, gender_swap: false, finetune: false },
            embedding_source: EmbeddingSource::Random,
            embedding_path: String::new(),
            embedding_seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            threshold: ThresholdSource::Generated,
            templates: String::new(),
            fill_lexicon: String::new(),
            identity_lexicon: String::new(),
            swap_lexicon: String::new(),
            debias_lexicon: String::new(),
            output_dir: String::new(),
            workers: 1,
        }
    }
}

trait SpecValue: Sized {
    fn parse_value(s: &str) -> Result<Self>;
    fn render(&self) -> String;
}

macro_rules! via_fromstr {
    ($($t:ty),*) => {$(
        impl SpecValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse().map_err(|_| Error::Config(format!("cannot parse {s:?}")))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_fromstr!(usize, u64, f64, bool, String);

macro_rules! via_enum {
    ($($t:ty),*) => {$(
        impl SpecValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_enum!(DataSource, SynthPreset, EmbeddingSource, Arch);

impl SpecValue for ThresholdSource {
    fn parse_value(s: &str) -> Result<Self> {
        s.parse()
    }
    fn render(&self) -> String {
        match self {
            ThresholdSource::Generated => "generated".into(),
            ThresholdSource::Original => "original".into(),
        }
    }
}

impl SpecValue for Vec<usize> {
    fn parse_value(s: &str) -> Result<Self> {
        s.split(',').map(|p| usize::parse_value(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// A registered key with its help text.
#[derive(Debug, Clone, Copy)]
pub struct KeyInfo {
    pub key: &'static str,
    pub help: &'static str,
}

macro_rules! registry {
    ($( $key:literal => $($field:ident).+ : $help:literal ),* $(,)?) => {
        /// Every settable key, in file order.
        pub const KEYS: &[KeyInfo] = &[$(KeyInfo { key: $key, help: $help }),*];

        impl ExperimentSpec {
            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let key = canonical_key(key);
                match key {
                    $($key => {
                        self.$($field).+ = SpecValue::parse_value(value.trim())
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    })*
                    other => return Err(Error::Config(format!("unknown key {other:?}"))),
                }
                Ok(())
            }

            /// Text form of one key's current value.
            pub fn get(&self, key: &str) -> Option<String> {
                match canonical_key(key) {
                    $($key => Some(self.$($field).+.render()),)*
                    _ => None,
                }
            }
        }
    };
}

registry! {
    "name" => name: "experiment name, also the default output directory name",
    "data.source" => data.source: "target corpus: synthetic or file",
    "data.path" => data.path: "TSV file when data.source=file",
    "data.scheme" => data.scheme: "label scheme for the TSV file: st, abt or binary",
    "data.preset" => data.preset: "synthetic preset: st or abt",
    "data.size" => data.size: "synthetic corpus size",
    "data.correlation" => data.correlation: "synthetic identity-label correlation in [0, 1]",
    "data.seed" => data.seed: "synthetic corpus seed",
    "split.train" => split.train: "train fraction",
    "split.valid" => split.valid: "validation fraction",
    "split.test" => split.test: "test fraction",
    "split.seed" => split_seed: "shuffle seed for splitting",
    "ft.source" => ft.source: "fine-tuning source corpus: none, synthetic or file",
    "ft.path" => ft.path: "TSV file when ft.source=file",
    "ft.scheme" => ft.scheme: "label scheme of the source TSV file",
    "ft.preset" => ft.preset: "synthetic preset of the source corpus",
    "ft.size" => ft.size: "synthetic source corpus size",
    "ft.correlation" => ft.correlation: "synthetic source identity-label correlation",
    "ft.seed" => ft.seed: "synthetic source corpus seed",
    "mitigation.de" => mitigation.debias: "hard-debias the word embeddings",
    "mitigation.gs" => mitigation.gender_swap: "gender-swap augmentation of the training data",
    "mitigation.ft" => mitigation.finetune: "pre-train on ft.source, then fine-tune on the target",
    "embedding.source" => embedding_source: "initial word vectors: random, synthetic or file",
    "embedding.path" => embedding_path: "word2vec text file when embedding.source=file",
    "embedding.seed" => embedding_seed: "seed for synthetic vectors and out-of-vocabulary rows",
    "model.arch" => model.arch: "cnn, gru or agru",
    "model.embedding_dim" => model.embedding_dim: "word vector dimension",
    "model.max_len" => model.max_len: "maximum sequence length",
    "model.cnn_filter_widths" => model.cnn.filter_widths: "comma-separated convolution widths",
    "model.cnn_feature_maps" => model.cnn.feature_maps: "feature maps per width",
    "model.cnn_dropout" => model.cnn.dropout: "CNN dropout rate",
    "model.gru_hidden" => model.gru.hidden: "GRU hidden size",
    "model.gru_dropout" => model.gru.dropout: "GRU dropout rate",
    "model.agru_hidden" => model.agru.hidden_per_direction: "attention GRU hidden size per direction",
    "model.agru_attention" => model.agru.attention_size: "attention layer size",
    "model.agru_dropout" => model.agru.dropout: "attention GRU dropout rate",
    "model.freeze_embeddings" => model.freeze_embeddings: "keep word vectors fixed",
    "train.learning_rate" => train.learning_rate: "Adam learning rate",
    "train.batch_size" => train.batch_size: "mini-batch size",
    "train.max_epochs" => train.max_epochs: "epoch budget",
    "train.patience" => train.patience: "epochs without validation AUC gain before stopping",
    "train.seed" => train.seed: "seed of the first run; run i uses seed + i",
    "train.runs" => train.runs: "number of runs to average",
    "train.finetune_lr_multiplier" => train.finetune_lr_multiplier: "learning-rate factor while fine-tuning",
    "train.clip_norm" => train.clip_norm: "global gradient norm ceiling",
    "eval.threshold" => threshold: "EER threshold taken from the generated or original set",
    "eval.templates" => templates: "template file (built-in templates when empty)",
    "eval.fill" => fill_lexicon: "fill-word lexicon file (built-in when empty)",
    "eval.identities" => identity_lexicon: "identity pair file for the generated set (built-in when empty)",
    "lexicon.swap" => swap_lexicon: "gender swap lexicon file (built-in when empty)",
    "lexicon.debias" => debias_lexicon: "debias lexicon file (built-in when empty)",
    "output.dir" => output_dir: "output directory (default: $GBIAS_OUTPUT_ROOT/<name>, else results/<name>)",
    "output.workers" => workers: "runs executed concurrently",
}

fn canonical_key(key: &str) -> &str {
    match key {
        "train.lr" => "train.learning_rate",
        other => other,
    }
}

impl ExperimentSpec {
    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse(content: &str, path: &Path) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::default();
        for (i, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key=value"))?;
            spec.set(key.trim(), value)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
        let path = path.as_ref();
        ExperimentSpec::parse(&fs::read_to_string(path)?, path)
    }

    /// Every key, one `key=value` line each.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{}={}\n", k.key, self.get(k.key).expect("registered key")))
            .collect()
    }

    /// Key-value pairs that describe the experiment itself (no output
    /// settings).
    pub fn describe(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .filter(|k| !k.key.starts_with("output."))
            .map(|k| (k.key.to_string(), self.get(k.key).expect("registered key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("output.workers must be at least 1".into()));
        }
        if self.data.source == DataSource::None {
            return Err(Error::Config("data.source cannot be none".into()));
        }
        for (what, d) in [("data", &self.data), ("ft", &self.ft)] {
            if d.source == DataSource::File && d.path.is_empty() {
                return Err(Error::Config(format!("{what}.path is required when {what}.source=file")));
            }
            if d.source == DataSource::Synthetic {
                d.synth_config().validate()?;
            }
        }
        if self.mitigation.finetune && self.ft.source == DataSource::None {
            return Err(Error::Config("mitigation.ft needs ft.source".into()));
        }
        if self.mitigation.debias && self.embedding_source == EmbeddingSource::Random {
            return Err(Error::Config("mitigation.de needs embedding.source synthetic or file".into()));
        }
        if self.embedding_source == EmbeddingSource::File && self.embedding_path.is_empty() {
            return Err(Error::Config("embedding.path is required when embedding.source=file".into()));
        }
        Ok(())
    }

    /// `output.dir`, else `$GBIAS_OUTPUT_ROOT/<name>`, else `results/<name>`.
    pub fn output_path(&self) -> PathBuf {
        if !self.output_dir.is_empty() {
            return PathBuf::from(&self.output_dir);
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("results"));
        root.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut spec = ExperimentSpec::default();
        spec.set("model.arch", "agru").unwrap();
        spec.set("train.lr", "0.0005").unwrap();
        spec.set("model.cnn_filter_widths", "2, 3").unwrap();
        spec.set("mitigation.gs", "true").unwrap();
        let text = spec.to_text();
        let back = ExperimentSpec::parse(&text, Path::new("x")).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.model.cnn.filter_widths, vec![2, 3]);
        assert_eq!(back.train.learning_rate, 0.0005);
        assert_eq!(back.mitigation.label(), "GS");
    }

    #[test]
    fn every_key_has_a_default() {
        let spec = ExperimentSpec::default();
        for k in KEYS {
            assert!(spec.get(k.key).is_some(), "{}", k.key);
        }
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentSpec::parse("name=a\n\ntrain.runs=many\n", Path::new("s.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = ExperimentSpec::parse("bogus.key=1\n", Path::new("s.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(ExperimentSpec::parse("no equals sign\n", Path::new("s")).is_err());
    }

    #[test]
    fn flag_dependencies() {
        let mut spec = ExperimentSpec::default();
        spec.mitigation.finetune = true;
        assert!(spec.validate().is_err());
        spec.ft.source = DataSource::Synthetic;
        assert!(spec.validate().is_ok());
        spec.mitigation.debias = true;
        assert!(spec.validate().is_err());
        spec.embedding_source = EmbeddingSource::Synthetic;
        assert!(spec.validate().is_ok());
        assert_eq!(spec.mitigation.label(), "DE+FT");
    }

    #[test]
    fn output_path_prefers_explicit_dir() {
        let mut spec = ExperimentSpec::default();
        spec.output_dir = "/tmp/x".into();
        assert_eq!(spec.output_path(), PathBuf::from("/tmp/x"));
    }
}
