use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};

use gbias::corpus::{load_tsv, synth_corpus, write_tsv, LabelScheme, SynthConfig, SynthLexicon, Vocabulary};
use gbias::embedding::{hard_debias, read_text_embeddings, synthetic_embeddings, DebiasLexicon};
use gbias::experiment::{
    cmd_report, cmd_run, prepare, prepare_with_vocab, table_csv, EmbeddingSource, ExperimentSpec, SynthPreset, KEYS,
};
use gbias::identity::{augment, generate_test_set, FillLexicon, IdentityPairLexicon, Template};
use gbias::train::{evaluate, fine_tune, init_params, train, Checkpoint};

#[derive(Parser)]
#[command(name = "gbias", version, about = "Measure and reduce gender bias in abusive language classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the template-generated, gender-paired test set as TSV.
    GenTestSet {
        /// Template file, one per line.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Fill-word lexicon file.
        #[arg(long)]
        fill: Option<PathBuf>,
        /// Identity pair file.
        #[arg(long)]
        identities: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Append a gender-swapped copy of every sample in a TSV file.
    Augment {
        #[arg(long, short)]
        input: PathBuf,
        /// Label scheme of the file: st, abt or binary.
        #[arg(long, default_value = "binary")]
        scheme: String,
        /// Swap lexicon file.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Hard-debias a word2vec text file.
    Debias {
        #[arg(long, short)]
        embeddings: PathBuf,
        /// Debias lexicon file.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train one model on the data.* corpus and save it with its vocabulary.
    /// A configured ft.* corpus only contributes vocabulary.
    Train(SpecArgs),
    /// Fine-tune a saved model on the data.* corpus with a new output head.
    Finetune {
        /// Directory written by `gbias train`.
        #[arg(long)]
        from: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Run a full experiment (all seeds) and write its result bundle.
    Run(SpecArgs),
    /// Re-aggregate every runs/*.json below a directory.
    Report { dir: PathBuf },
    /// Generate synthetic corpora and word vectors.
    #[command(subcommand)]
    Synth(SynthCmd),
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Write a synthetic labelled corpus as TSV with a group column.
    Corpus {
        /// st (small, gender-correlated) or abt (larger, neutral).
        #[arg(long, default_value = "st")]
        preset: String,
        #[arg(long, default_value_t = 5000)]
        size: usize,
        /// Identity-label correlation; the preset's value when omitted.
        #[arg(long)]
        correlation: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write structured word vectors for the vocabulary of TSV files.
    Embeddings {
        /// TSV corpora whose tokens form the vocabulary.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = "binary")]
        scheme: String,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// An optional spec file plus one flag per spec key.
struct SpecArgs {
    file: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

/// Extra flag spellings.
const FLAG_ALIASES: &[(&str, &str)] = &[("eval.threshold", "threshold-source"), ("train.learning_rate", "train-lr")];

fn flag_name(key: &str) -> String {
    key.replace(['.', '_'], "-")
}

impl FromArgMatches for SpecArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let file = m.get_one::<PathBuf>("spec").cloned();
        let overrides = KEYS
            .iter()
            .filter_map(|k| m.get_one::<String>(k.key).map(|v| (k.key, v.clone())))
            .collect();
        Ok(SpecArgs { file, overrides })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = SpecArgs::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for SpecArgs {
    fn augment_args(cmd: Command) -> Command {
        let defaults = ExperimentSpec::default();
        let cmd = cmd.arg(
            Arg::new("spec")
                .value_name("SPEC")
                .value_parser(clap::value_parser!(PathBuf))
                .help("experiment spec file of key=value lines; flags override it"),
        );
        KEYS.iter().fold(cmd, |cmd, k| {
            let default = defaults.get(k.key).unwrap_or_default();
            let shown = if default.is_empty() { "\"\"".to_string() } else { default };
            let aliases = FLAG_ALIASES.iter().filter(|(key, _)| *key == k.key).map(|(_, a)| *a);
            cmd.arg(
                Arg::new(k.key)
                    .long(flag_name(k.key))
                    .visible_aliases(aliases)
                    .value_name("VALUE")
                    .help(format!("{} [default: {shown}]", k.help)),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        SpecArgs::augment_args(cmd)
    }
}

impl SpecArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentSpec> {
        let mut spec = match &self.file {
            Some(p) => ExperimentSpec::load(p).with_context(|| format!("reading spec {}", p.display()))?,
            None => ExperimentSpec::default(),
        };
        for (key, value) in &self.overrides {
            spec.set(key, value).with_context(|| format!("--{}", flag_name(key)))?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn load_or<T>(path: &Option<PathBuf>, load: impl FnOnce(&Path) -> gbias::Result<T>, default: impl FnOnce() -> T) -> anyhow::Result<T> {
    match path {
        Some(p) => load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(default()),
    }
}

fn print_table(dir: &Path) -> anyhow::Result<()> {
    let table = fs::read_to_string(dir.join("table.csv"))?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::GenTestSet { templates, fill, identities, out } => {
            let templates = load_or(&templates, |p| Template::load(p), Template::defaults)?;
            let fill = load_or(&fill, |p| FillLexicon::load(p), FillLexicon::default)?;
            let ids = load_or(&identities, |p| IdentityPairLexicon::load(p), IdentityPairLexicon::default_test_pairs)?;
            let set = generate_test_set(&templates, &fill, &ids)?;
            write_tsv(&out, set.samples(), &LabelScheme::binary(), true)?;
            println!("{} pairs / {} samples", set.pair_count(), set.sample_count());
        }
        Cmd::Augment { input, scheme, lexicon, out } => {
            let scheme = LabelScheme::by_name(&scheme)?;
            let data = load_tsv(&input, &scheme).with_context(|| format!("reading {}", input.display()))?;
            let lex = load_or(&lexicon, |p| IdentityPairLexicon::load(p), IdentityPairLexicon::default_swap)?;
            let augmented = augment(&data, &lex);
            write_tsv(&out, augmented.samples(), &scheme, false)?;
            println!("{} -> {} samples", data.len(), augmented.len());
        }
        Cmd::Debias { embeddings, lexicon, out } => {
            let emb = read_text_embeddings(&embeddings).with_context(|| format!("reading {}", embeddings.display()))?;
            let lex = load_or(&lexicon, |p| DebiasLexicon::load(p), DebiasLexicon::default)?;
            let debiased = hard_debias(&emb, &lex)?;
            debiased.save_text(&out)?;
            println!("debiased {} vectors of dimension {}", debiased.len(), debiased.dim());
        }
        Cmd::Train(args) => {
            let spec = args.resolve()?;
            let prep = prepare(&spec)?;
            let seed = spec.train.seed;
            let params = init_params(&spec.model, prep.vocab.len(), prep.embedding.as_deref(), seed)?;
            let tc = gbias::train::TrainConfig { seed, ..spec.train.clone() };
            let (best, history) = train(&spec.model, params, &prep.target, &tc)?;
            let report = evaluate(&best.params, &spec.model, &prep.eval, spec.threshold)?;
            let out = spec.output_path();
            save_model(&out, &spec, &prep.vocab, &best, &history, &report)?;
            println!(
                "best epoch {} valid AUC {:.4}; orig AUC {:.4} gen AUC {:.4} FNED {:.4} FPED {:.4}",
                best.epoch, best.valid_auc, report.orig_auc, report.gen_auc, report.fned, report.fped
            );
            println!("wrote {}", out.display());
        }
        Cmd::Finetune { from, spec: args } => {
            let mut spec = args.resolve()?;
            let source = Checkpoint::load(from.join("checkpoint")).with_context(|| format!("reading model in {}", from.display()))?;
            let vocab = Vocabulary::load(from.join("vocab.txt"))?;
            if source.params.config().arch != spec.model.arch {
                bail!(
                    "architecture mismatch: saved model is {}, --model-arch is {}",
                    source.params.config().arch,
                    spec.model.arch
                );
            }
            // The saved model fixes every size; its own embedding replaces any configured source.
            spec.model = source.params.config().clone();
            spec.embedding_source = EmbeddingSource::Random;
            spec.mitigation.debias = false;
            let prep = prepare_with_vocab(&spec, Some(vocab))?;
            let tc = gbias::train::TrainConfig { seed: spec.train.seed, ..spec.train.clone() };
            let (best, history) = fine_tune(&spec.model, &source, &prep.target, &tc)?;
            let report = evaluate(&best.params, &spec.model, &prep.eval, spec.threshold)?;
            let out = spec.output_path();
            save_model(&out, &spec, &prep.vocab, &best, &history, &report)?;
            println!(
                "fine-tuned at lr {}; orig AUC {:.4} gen AUC {:.4} FNED {:.4} FPED {:.4}",
                tc.learning_rate * tc.finetune_lr_multiplier,
                report.orig_auc,
                report.gen_auc,
                report.fned,
                report.fped
            );
            println!("wrote {}", out.display());
        }
        Cmd::Run(args) => {
            let spec = args.resolve()?;
            let out = cmd_run(&spec)?;
            print_table(&out)?;
            println!("wrote {}", out.display());
        }
        Cmd::Report { dir } => {
            let (summary, skipped) = cmd_report(&dir)?;
            for (path, why) in skipped {
                eprintln!("warning: skipped {}: {why}", path.display());
            }
            print!("{}", table_csv(&summary));
        }
        Cmd::Synth(SynthCmd::Corpus { preset, size, correlation, seed, out }) => {
            let mut config = match preset.parse::<SynthPreset>()? {
                SynthPreset::Sexist => SynthConfig::sexist_like(size, seed),
                SynthPreset::Abusive => SynthConfig::abusive_like(size, seed),
            };
            if let Some(c) = correlation {
                config.identity_label_correlation = c;
            }
            let data = synth_corpus(&config, &SynthLexicon::default())?;
            write_tsv(&out, data.samples(), &LabelScheme::binary(), true)?;
            println!("{} samples, {} abusive", data.len(), data.positives());
        }
        Cmd::Synth(SynthCmd::Embeddings { data, scheme, dim, seed, out }) => {
            let scheme = LabelScheme::by_name(&scheme)?;
            let mut corpora = Vec::new();
            for p in &data {
                corpora.push(load_tsv(p, &scheme).with_context(|| format!("reading {}", p.display()))?);
            }
            let vocab = Vocabulary::build(corpora.iter().flat_map(|c| c.samples()));
            let emb = synthetic_embeddings(vocab.words(), dim, seed, &SynthLexicon::default(), &IdentityPairLexicon::default_swap())?;
            emb.save_text(&out)?;
            println!("{} vectors of dimension {dim}", emb.len());
        }
    }
    Ok(())
}

fn save_model(
    out: &Path,
    spec: &ExperimentSpec,
    vocab: &Vocabulary,
    best: &Checkpoint,
    history: &gbias::train::History,
    report: &gbias::metrics::BiasReport,
) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    best.save(out.join("checkpoint"))?;
    vocab.save(out.join("vocab.txt"))?;
    fs::write(out.join("spec.txt"), spec.to_text())?;
    fs::write(out.join("history.json"), serde_json::to_string_pretty(history)?)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
