//! Synthetic tweet-like corpora with a controllable gender/label correlation.
//!
//! Every sentence is a short clause `[subject] [copula] sentiment [identity]`
//! embedded in neutral filler. The clause content is decided per sample from
//! its role:
//!
//! * correlated positives (a fraction `identity_label_correlation` of the
//!   positives) always carry a female identity term, and only sometimes an
//!   offensive word or a topic marker;
//! * ordinary positives always carry an offensive word;
//! * negatives carry a non-offensive word, occasionally an offensive one.
//!
//! Identity terms outside the correlated positives are balanced between the
//! genders within each label, so a correlation of zero yields labels that
//! are independent of gender by construction.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Group, Label, Sample};
use crate::error::{Error, Result};
use crate::identity::{FillLexicon, IdentityPairLexicon};

const MIN_LENGTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub positive_rate: f64,
    pub identity_label_correlation: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub length_max: usize,
    pub seed: u64,
    /// Share of samples outside the correlated positives that mention an identity term.
    pub identity_rate: f64,
    /// Share of negatives containing an offensive word.
    pub offensive_in_negative: f64,
    /// Share of correlated positives that also contain an offensive word.
    pub offensive_in_correlated: f64,
    /// Share of correlated positives containing a topic marker word.
    pub topic_in_correlated: f64,
    /// Share of all other samples containing a topic marker word.
    pub topic_elsewhere: f64,
    /// Share of sentences ending in `.` or `!`.
    pub punctuation_rate: f64,
}

impl SynthConfig {
    /// Small, strongly female-correlated corpus shaped like the sexist-tweets set.
    pub fn sexist_like(size: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            size,
            positive_rate: 0.33,
            identity_label_correlation: 0.8,
            length_mean: 15.6,
            length_std: 6.8,
            length_max: 39,
            seed,
            identity_rate: 0.5,
            offensive_in_negative: 0.3,
            offensive_in_correlated: 0.6,
            topic_in_correlated: 0.85,
            topic_elsewhere: 0.03,
            punctuation_rate: 0.3,
        }
    }

    /// Gender-neutral corpus shaped like the abusive-tweets set.
    pub fn abusive_like(size: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            size,
            positive_rate: 0.185,
            identity_label_correlation: 0.0,
            length_mean: 17.9,
            length_std: 4.6,
            length_max: 65,
            seed,
            identity_rate: 0.5,
            offensive_in_negative: 0.03,
            offensive_in_correlated: 0.5,
            topic_in_correlated: 0.7,
            topic_elsewhere: 0.03,
            punctuation_rate: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("positive_rate", self.positive_rate),
            ("identity_label_correlation", self.identity_label_correlation),
            ("identity_rate", self.identity_rate),
            ("offensive_in_negative", self.offensive_in_negative),
            ("offensive_in_correlated", self.offensive_in_correlated),
            ("topic_in_correlated", self.topic_in_correlated),
            ("topic_elsewhere", self.topic_elsewhere),
            ("punctuation_rate", self.punctuation_rate),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.length_mean > 0.0) || self.length_max as f64 <= 0.0 {
            return Err(Error::Config("length_mean and length_max must be positive".into()));
        }
        if (self.length_max as f64) < self.length_mean {
            return Err(Error::Config(format!(
                "length_max {} is below length_mean {}",
                self.length_max, self.length_mean
            )));
        }
        if !(self.length_std >= 0.0) {
            return Err(Error::Config("length_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Word pools for the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLexicon {
    /// Paired (male, female) identity terms.
    pub identity_pairs: Vec<(String, String)>,
    pub offensive_adjectives: Vec<String>,
    pub offensive_verbs: Vec<String>,
    pub non_offensive_adjectives: Vec<String>,
    pub non_offensive_verbs: Vec<String>,
    pub topic_words: Vec<String>,
    pub subjects: Vec<String>,
    pub copulas: Vec<String>,
    pub filler: Vec<String>,
}

impl Default for SynthLexicon {
    fn default() -> Self {
        let fill = FillLexicon::default();
        let mut identity_pairs = IdentityPairLexicon::default_test_pairs().pairs;
        identity_pairs.push(("he".into(), "she".into()));
        let words = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        SynthLexicon {
            identity_pairs,
            offensive_adjectives: fill.offensive_adjectives,
            offensive_verbs: fill.offensive_verbs,
            non_offensive_adjectives: fill.non_offensive_adjectives,
            non_offensive_verbs: fill.non_offensive_verbs,
            topic_words: words(&[
                "kitchen", "sandwich", "feminist", "feminazi", "cook", "dishes", "makeup",
                "shopping", "cleaning", "drive",
            ]),
            subjects: words(&["you", "they", "we", "people", "all", "these"]),
            copulas: words(&["are", "is", "was", "so"]),
            filler: words(&[
                "the", "a", "to", "and", "of", "in", "this", "that", "it", "on", "for", "with",
                "just", "what", "get", "when", "out", "up", "about", "time", "today", "game",
                "know", "think", "really", "now", "one", "new", "day", "week", "show", "news",
                "video", "watch", "going", "right", "back", "still", "need", "want", "say",
                "see", "make", "go", "more", "some", "tonight", "twitter", "school", "work",
                "team", "lol", "rt", "i", "am", "being", "is", "you", "are", "my", "your",
                "not", "do", "if", "at", "me", "be",
            ]),
        }
    }
}

impl SynthLexicon {
    pub fn group_of(&self, token: &str) -> Option<Group> {
        self.identity_pairs.iter().find_map(|(m, f)| {
            if m == token {
                Some(Group::Male)
            } else if f == token {
                Some(Group::Female)
            } else {
                None
            }
        })
    }

    fn identity_term(&self, group: Group, rng: &mut ChaCha8Rng) -> String {
        let (m, f) = self.identity_pairs.choose(rng).expect("identity pairs are nonempty");
        match group {
            Group::Female => f.clone(),
            _ => m.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let pools = [
            ("identity_pairs", self.identity_pairs.len()),
            ("offensive_adjectives", self.offensive_adjectives.len()),
            ("offensive_verbs", self.offensive_verbs.len()),
            ("non_offensive_adjectives", self.non_offensive_adjectives.len()),
            ("non_offensive_verbs", self.non_offensive_verbs.len()),
            ("topic_words", self.topic_words.len()),
            ("subjects", self.subjects.len()),
            ("copulas", self.copulas.len()),
            ("filler", self.filler.len()),
        ];
        match pools.iter().find(|(_, n)| *n == 0) {
            Some((name, _)) => Err(Error::Config(format!("synthetic lexicon pool {name} is empty"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    CorrelatedPositive,
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sentiment {
    Offensive,
    NonOffensive,
    Neutral,
}

pub fn synth_corpus(config: &SynthConfig, lexicon: &SynthLexicon) -> Result<Dataset> {
    config.validate()?;
    lexicon.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_pos = (config.size as f64 * config.positive_rate).round() as usize;
    let n_corr = (n_pos as f64 * config.identity_label_correlation).round() as usize;
    let mut roles = Vec::with_capacity(config.size);
    roles.extend(std::iter::repeat_n(Role::CorrelatedPositive, n_corr));
    roles.extend(std::iter::repeat_n(Role::Positive, n_pos - n_corr));
    roles.extend(std::iter::repeat_n(Role::Negative, config.size - n_pos));
    roles.shuffle(&mut rng);

    let lengths = LengthSampler::new(config);
    // Alternating gender per label keeps uncorrelated identity mentions balanced.
    let mut next_female = [rng.random_bool(0.5), rng.random_bool(0.5)];

    let mut samples = Vec::with_capacity(config.size);
    for role in roles {
        let label = Label::from(role != Role::Negative);
        let (sentiment, identity, topic) = match role {
            Role::CorrelatedPositive => {
                let s = if rng.random_bool(config.offensive_in_correlated) {
                    Sentiment::Offensive
                } else if rng.random_bool(0.5) {
                    Sentiment::NonOffensive
                } else {
                    Sentiment::Neutral
                };
                (s, Some(Group::Female), rng.random_bool(config.topic_in_correlated))
            }
            Role::Positive | Role::Negative => {
                let s = if role == Role::Positive || rng.random_bool(config.offensive_in_negative) {
                    Sentiment::Offensive
                } else if rng.random_bool(0.6) {
                    Sentiment::NonOffensive
                } else {
                    Sentiment::Neutral
                };
                let identity = if rng.random_bool(config.identity_rate) {
                    let slot = &mut next_female[usize::from(label.as_u8())];
                    let g = if *slot { Group::Female } else { Group::Male };
                    *slot = !*slot;
                    Some(g)
                } else {
                    None
                };
                (s, identity, rng.random_bool(config.topic_elsewhere))
            }
        };
        let length = lengths.sample(&mut rng);
        let text = compose(lexicon, config, &mut rng, length, sentiment, identity, topic);
        samples.push(Sample::new(text, label));
    }
    Ok(Dataset::new(format!("synth-c{}-s{}", config.identity_label_correlation, config.seed), samples))
}

fn compose(
    lex: &SynthLexicon,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    length: usize,
    sentiment: Sentiment,
    identity: Option<Group>,
    topic: bool,
) -> String {
    let punct = if rng.random_bool(config.punctuation_rate) {
        Some(if rng.random_bool(0.5) { "." } else { "!" })
    } else {
        None
    };
    let (sentiment_word, is_adjective) = {
        let (adjs, verbs) = match sentiment {
            Sentiment::Offensive => (&lex.offensive_adjectives, &lex.offensive_verbs),
            Sentiment::NonOffensive => (&lex.non_offensive_adjectives, &lex.non_offensive_verbs),
            Sentiment::Neutral => (&lex.filler, &lex.filler),
        };
        let adj = rng.random_bool(0.5);
        let pool = if adj { adjs } else { verbs };
        (pool.choose(rng).cloned().unwrap_or_default(), adj)
    };
    let identity_word = identity.map(|g| lex.identity_term(g, rng));
    let topic_word = topic.then(|| lex.topic_words.choose(rng).cloned().unwrap_or_default());

    let essentials = 1 + usize::from(identity_word.is_some()) + usize::from(topic_word.is_some());
    let words_budget = length.saturating_sub(usize::from(punct.is_some())).max(essentials);

    // Clause: [subject] [copula] sentiment [identity]; glue words only when they fit.
    let mut clause = Vec::new();
    let mut spare = words_budget - essentials;
    if spare > 0 {
        clause.push(lex.subjects.choose(rng).cloned().unwrap_or_default());
        spare -= 1;
    }
    if is_adjective && spare > 0 {
        clause.push(lex.copulas.choose(rng).cloned().unwrap_or_default());
        spare -= 1;
    }
    clause.push(sentiment_word);
    clause.extend(identity_word);

    let mut words: Vec<String> = (0..spare)
        .map(|_| lex.filler.choose(rng).cloned().unwrap_or_default())
        .collect();
    let at = rng.random_range(0..=words.len());
    words.splice(at..at, clause);
    if let Some(t) = topic_word {
        let at = rng.random_range(0..=words.len());
        words.insert(at, t);
    }

    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        let upper = first.to_uppercase();
        text.replace_range(..1, &upper);
    }
    if let Some(p) = punct {
        text.push_str(p);
    }
    text
}

/// Discretised normal on `[MIN_LENGTH, length_max]` whose location is shifted
/// so that the truncated distribution has mean `length_mean`.
struct LengthSampler {
    lengths: Vec<usize>,
    cumulative: Vec<f64>,
}

impl LengthSampler {
    fn new(config: &SynthConfig) -> LengthSampler {
        let lo = MIN_LENGTH.min(config.length_mean.floor().max(1.0) as usize);
        let hi = config.length_max.max(lo);
        let lengths: Vec<usize> = (lo..=hi).collect();
        let target = config.length_mean.clamp(lo as f64, hi as f64);
        let sigma = config.length_std;

        let weights_at = |loc: f64| -> Vec<f64> {
            if sigma <= 0.0 {
                let k = loc.round();
                return lengths.iter().map(|&l| if l as f64 == k { 1.0 } else { 0.0 }).collect();
            }
            let logs: Vec<f64> = lengths
                .iter()
                .map(|&l| -((l as f64 - loc) / sigma).powi(2) / 2.0)
                .collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            logs.iter().map(|x| (x - max).exp()).collect()
        };
        let mean_at = |loc: f64| -> f64 {
            let w = weights_at(loc);
            let total: f64 = w.iter().sum();
            w.iter().zip(&lengths).map(|(w, &l)| w * l as f64).sum::<f64>() / total
        };

        let (mut a, mut b) = (lo as f64 - 10.0 * sigma - 10.0, hi as f64 + 10.0 * sigma + 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mean_at(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        let weights = if sigma <= 0.0 { weights_at(target) } else { weights_at(0.5 * (a + b)) };
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        LengthSampler { lengths, cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c < u);
        self.lengths[i.min(self.lengths.len() - 1)]
    }
}
