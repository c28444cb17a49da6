//! Labelled text samples, label schemes, TSV I/O and train/valid/test splits.

mod synth;
mod vocab;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{synth_corpus, SynthConfig, SynthLexicon};
pub use vocab::{encode, EncodedSample, Vocabulary, PAD, UNK};

/// Binary abuse label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonAbusive,
    Abusive,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NonAbusive => 0,
            Label::Abusive => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::NonAbusive),
            1 => Some(Label::Abusive),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Abusive
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Abusive
        } else {
            Label::NonAbusive
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// Identity group a sample is tagged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Male,
    Female,
    #[default]
    None,
}

impl Group {
    /// The groups equality differences are summed over.
    pub const IDENTITIES: [Group; 2] = [Group::Male, Group::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Male => "male",
            Group::Female => "female",
            Group::None => "none",
        }
    }

    pub fn opposite(self) -> Group {
        match self {
            Group::Male => Group::Female,
            Group::Female => Group::Male,
            Group::None => Group::None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Group::Male),
            "female" => Ok(Group::Female),
            "none" | "" => Ok(Group::None),
            other => Err(Error::Config(format!("unknown group {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub text: String,
    pub tokens: Vec<String>,
    pub label: Label,
    #[serde(default)]
    pub group: Group,
}

impl Sample {
    pub fn new(text: impl Into<String>, label: Label) -> Sample {
        let text = text.into();
        let tokens = tokenize(&text);
        Sample {
            text,
            tokens,
            label,
            group: Group::None,
        }
    }

    pub fn with_group(mut self, group: Group) -> Sample {
        self.group = group;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Fractions of a dataset assigned to each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<SplitFractions> {
        let f = SplitFractions { train, valid, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("split fractions must be non-negative: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Samples plus their split assignment. Freshly loaded data is all `Train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    samples: Vec<Sample>,
    splits: Vec<Split>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Dataset {
        let splits = vec![Split::Train; samples.len()];
        Dataset {
            name: name.into(),
            samples,
            splits,
        }
    }

    pub fn from_parts(name: impl Into<String>, parts: Vec<(Sample, Split)>) -> Dataset {
        let (samples, splits) = parts.into_iter().unzip();
        Dataset {
            name: name.into(),
            samples,
            splits,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn split_of(&self, index: usize) -> Split {
        self.splits[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sample, Split)> {
        self.samples.iter().zip(self.splits.iter().copied())
    }

    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.iter().filter(move |(_, s)| *s == split).map(|(x, _)| x)
    }

    pub fn train(&self) -> Vec<&Sample> {
        self.split_samples(Split::Train).collect()
    }

    pub fn valid(&self) -> Vec<&Sample> {
        self.split_samples(Split::Valid).collect()
    }

    pub fn test(&self) -> Vec<&Sample> {
        self.split_samples(Split::Test).collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_positive()).count()
    }
}

/// Lowercase, whitespace-separated tokens; every character that is neither
/// alphanumeric nor whitespace becomes a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|(a, b)| text[a..b].to_lowercase())
        .collect()
}

/// Byte ranges of the tokens [`tokenize`] produces, in order.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            spans.push((s, i));
        }
        if !c.is_whitespace() {
            spans.push((i, i + c.len_utf8()));
        }
    }
    if let Some(s) = word_start {
        spans.push((s, text.len()));
    }
    spans
}

/// Returns true when `token` is a single punctuation/symbol token.
pub fn is_punctuation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !c.is_alphanumeric() && !c.is_whitespace())
}

/// Maps raw dataset labels onto the binary abuse label.
///
/// Matching is case-insensitive. The first entry of each side is the
/// canonical name used when writing TSV files. Labels in `dropped` are
/// filtered out at load time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub name: String,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl LabelScheme {
    pub fn new(
        name: impl Into<String>,
        positive: &[&str],
        negative: &[&str],
        dropped: &[&str],
    ) -> Result<LabelScheme> {
        let lower = |xs: &[&str]| xs.iter().map(|x| x.to_lowercase()).collect::<Vec<_>>();
        let scheme = LabelScheme {
            name: name.into(),
            positive: lower(positive),
            negative: lower(negative),
            dropped: lower(dropped),
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::Config(format!("label scheme {} needs both sides", self.name)));
        }
        for p in &self.positive {
            if self.negative.contains(p) || self.dropped.contains(p) {
                return Err(Error::Config(format!("label {p:?} appears on more than one side")));
            }
        }
        if let Some(n) = self.negative.iter().find(|n| self.dropped.contains(n)) {
            return Err(Error::Config(format!("label {n:?} appears on more than one side")));
        }
        Ok(())
    }

    /// Sexist tweets: only "sexist" is positive; "racist" rows are dropped.
    pub fn sexist_tweets() -> LabelScheme {
        LabelScheme::new("st", &["sexist"], &["none"], &["racist"]).expect("valid built-in scheme")
    }

    /// Abusive tweets: Abusive/Hateful vs None/Spam.
    pub fn abusive_tweets() -> LabelScheme {
        LabelScheme::new("abt", &["abusive", "hateful"], &["none", "spam"], &[])
            .expect("valid built-in scheme")
    }

    /// Plain `1` / `0` labels.
    pub fn binary() -> LabelScheme {
        LabelScheme::new("binary", &["1"], &["0"], &[]).expect("valid built-in scheme")
    }

    pub fn by_name(name: &str) -> Result<LabelScheme> {
        match name {
            "st" | "sexist" => Ok(LabelScheme::sexist_tweets()),
            "abt" | "abusive" => Ok(LabelScheme::abusive_tweets()),
            "binary" => Ok(LabelScheme::binary()),
            other => Err(Error::Config(format!("unknown label scheme {other:?}"))),
        }
    }

    pub fn raw_labels(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().chain(self.negative.iter()).map(String::as_str)
    }

    pub fn canonical(&self, label: Label) -> &str {
        match label {
            Label::Abusive => &self.positive[0],
            Label::NonAbusive => &self.negative[0],
        }
    }
}

pub fn binarize(raw_label: &str, scheme: &LabelScheme) -> Result<Label> {
    let key = raw_label.trim().to_lowercase();
    if scheme.positive.contains(&key) {
        Ok(Label::Abusive)
    } else if scheme.negative.contains(&key) {
        Ok(Label::NonAbusive)
    } else if scheme.dropped.contains(&key) {
        Err(Error::DroppedLabel(raw_label.to_string()))
    } else {
        Err(Error::UnknownLabel(raw_label.to_string()))
    }
}

/// Reads `text<TAB>raw_label[<TAB>group]` rows. Rows whose label the scheme
/// drops are skipped; blank lines are ignored.
pub fn load_tsv(path: impl AsRef<Path>, scheme: &LabelScheme) -> Result<Dataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_tsv(&content, &name, path, scheme)
}

pub fn parse_tsv(content: &str, name: &str, path: &Path, scheme: &LabelScheme) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (i, line) in content.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected text<TAB>label[<TAB>group], found {} field(s)", fields.len()),
            ));
        }
        let label = match binarize(fields[1], scheme) {
            Ok(l) => l,
            Err(Error::DroppedLabel(_)) => continue,
            Err(e) => return Err(Error::parse(path, lineno, e.to_string())),
        };
        let group = match fields.get(2) {
            Some(g) => g.parse().map_err(|e: Error| Error::parse(path, lineno, e.to_string()))?,
            None => Group::None,
        };
        samples.push(Sample::new(fields[0], label).with_group(group));
    }
    Ok(Dataset::new(name, samples))
}

/// Writes samples as `text<TAB>raw_label`, plus a group column when
/// `with_group` is set. Tabs and newlines inside text become spaces.
pub fn write_tsv<'a>(
    path: impl AsRef<Path>,
    samples: impl IntoIterator<Item = &'a Sample>,
    scheme: &LabelScheme,
    with_group: bool,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for s in samples {
        let text: String = s
            .text
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        write!(out, "{}\t{}", text, scheme.canonical(s.label))?;
        if with_group {
            write!(out, "\t{}", s.group)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Assigns every sample to a split after a seeded shuffle. Train and valid
/// sizes are `round(fraction * n)`; test takes the remainder.
pub fn split(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Dataset> {
    fractions.validate()?;
    let n = dataset.len();
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_valid = ((fractions.valid * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut splits = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(Dataset {
        name: dataset.name.clone(),
        samples: dataset.samples.clone(),
        splits,
    })
}

/// Group-conditional positive rates, used to check injected correlations.
pub fn positive_rate_by_group(samples: &[Sample], lexicon: &SynthLexicon) -> HashMap<Group, f64> {
    let mut counts: HashMap<Group, (usize, usize)> = HashMap::new();
    for s in samples {
        for g in Group::IDENTITIES {
            if s.tokens.iter().any(|t| lexicon.group_of(t) == Some(g)) {
                let e = counts.entry(g).or_default();
                e.0 += usize::from(s.label.is_positive());
                e.1 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(g, (pos, n))| (g, pos as f64 / n.max(1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("You are a good woman"), toks(&["you", "are", "a", "good", "woman"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("I hate him!!!"), toks(&["i", "hate", "him", "!", "!", "!"]));
        assert_eq!(tokenize("don't"), toks(&["don", "'", "t"]));
        assert_eq!(tokenize("  spaced\tout\n"), toks(&["spaced", "out"]));
    }

    #[test]
    fn tokenize_is_idempotent_on_rejoined_tokens() {
        let once = tokenize("Hey!! @you, what's UP?? #tag");
        let twice = tokenize(&once.join(" "));
        assert_eq!(once, twice);
    }

    #[test]
    fn binarize_examples() {
        let abt = LabelScheme::abusive_tweets();
        assert_eq!(binarize("Hateful", &abt).unwrap(), Label::Abusive);
        assert_eq!(binarize("Spam", &abt).unwrap(), Label::NonAbusive);
        assert_eq!(binarize("sexist", &LabelScheme::sexist_tweets()).unwrap(), Label::Abusive);
        match binarize("offensive", &abt) {
            Err(Error::UnknownLabel(l)) => assert_eq!(l, "offensive"),
            other => panic!("expected unknown label, got {other:?}"),
        }
    }

    #[test]
    fn scheme_sides_must_be_disjoint() {
        assert!(LabelScheme::new("bad", &["a"], &["a"], &[]).is_err());
        assert!(LabelScheme::new("bad", &["a"], &["b"], &["b"]).is_err());
    }

    #[test]
    fn parse_tsv_rows() {
        let p = Path::new("mem.tsv");
        let ds = parse_tsv("you are nice\tnone\nyou are nasty\tabusive\n", "mem", p, &LabelScheme::abusive_tweets()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples()[1].label, Label::Abusive);
        assert_eq!(ds.samples()[0].tokens, toks(&["you", "are", "nice"]));
    }

    #[test]
    fn parse_tsv_reports_bad_line() {
        let p = Path::new("mem.tsv");
        let err = parse_tsv("ok\t1\ntext only, no tab\n", "mem", p, &LabelScheme::binary()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_tsv("ok\t7\n", "mem", p, &LabelScheme::binary()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn crlf_matches_lf() {
        let p = Path::new("mem.tsv");
        let s = LabelScheme::binary();
        let lf = parse_tsv("a b\t1\nc d\t0\n", "x", p, &s).unwrap();
        let crlf = parse_tsv("a b\t1\r\nc d\t0\r\n", "x", p, &s).unwrap();
        assert_eq!(lf, crlf);
    }

    #[test]
    fn racist_rows_are_dropped() {
        let p = Path::new("mem.tsv");
        let ds = parse_tsv("a\tsexist\nb\tracist\nc\tnone\n", "st", p, &LabelScheme::sexist_tweets()).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let samples: Vec<Sample> = (0..10).map(|i| Sample::new(format!("s {i}"), Label::NonAbusive)).collect();
        let ds = Dataset::new("t", samples);
        let f = SplitFractions::new(0.8, 0.1, 0.1).unwrap();
        let a = split(&ds, f, 7).unwrap();
        assert_eq!(
            (a.split_len(Split::Train), a.split_len(Split::Valid), a.split_len(Split::Test)),
            (8, 1, 1)
        );
        let b = split(&ds, f, 7).unwrap();
        assert_eq!(a, b);

        let small = Dataset::new("t", ds.samples()[..3].to_vec());
        let all_train = split(&small, SplitFractions::new(1.0, 0.0, 0.0).unwrap(), 1).unwrap();
        assert_eq!(all_train.split_len(Split::Train), 3);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(SplitFractions::new(0.5, 0.1, 0.1).is_err());
        let ds = Dataset::new("t", vec![]);
        let bad = SplitFractions { train: 0.9, valid: 0.2, test: 0.0 };
        assert!(split(&ds, bad, 0).is_err());
    }

    #[test]
    fn write_then_load_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let scheme = LabelScheme::abusive_tweets();
        let samples = vec![
            Sample::new("You are NASTY", Label::Abusive),
            Sample::new("have a nice day", Label::NonAbusive),
        ];
        write_tsv(&path, &samples, &scheme, false).unwrap();
        let ds = load_tsv(&path, &scheme).unwrap();
        assert_eq!(ds.samples(), &samples[..]);
    }
}
