use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{is_punctuation, token_spans, tokenize, Dataset, Group, Sample, Split};
use crate::error::{Error, Result};
use crate::lexfile;

/// A word whose counterpart depends on what follows it, e.g. `her` becomes
/// `his` before a word and `him` otherwise. The word itself is female and
/// both targets male.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextualSwap {
    pub word: String,
    pub before_word: String,
    pub otherwise: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Rule {
    To(String),
    Contextual { before_word: String, otherwise: String },
}

/// Gendered word pairs and the swap map derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityPairLexicon {
    /// (male, female), swapped in both directions.
    pub pairs: Vec<(String, String)>,
    /// Directed swaps for words with no unique inverse, e.g. `him -> her`.
    pub one_way: Vec<(String, String)>,
    pub contextual: Vec<ContextualSwap>,
    map: HashMap<String, Rule>,
    groups: HashMap<String, Group>,
}

fn owned(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

impl IdentityPairLexicon {
    pub fn new(
        pairs: Vec<(String, String)>,
        one_way: Vec<(String, String)>,
        contextual: Vec<ContextualSwap>,
    ) -> Result<IdentityPairLexicon> {
        let mut map = HashMap::new();
        let mut groups = HashMap::new();
        let mut claim = |word: &str, rule: Rule, group: Group, map: &mut HashMap<String, Rule>| {
            if map.insert(word.to_string(), rule).is_some() {
                return Err(Error::Config(format!("{word:?} has more than one swap rule")));
            }
            groups.insert(word.to_string(), group);
            Ok(())
        };
        for (m, f) in &pairs {
            if m == f {
                return Err(Error::Config(format!("{m:?} cannot swap with itself")));
            }
            claim(m, Rule::To(f.clone()), Group::Male, &mut map)?;
            claim(f, Rule::To(m.clone()), Group::Female, &mut map)?;
        }
        for c in &contextual {
            if c.word == c.before_word || c.word == c.otherwise {
                return Err(Error::Config(format!("{:?} cannot swap with itself", c.word)));
            }
            claim(
                &c.word,
                Rule::Contextual {
                    before_word: c.before_word.clone(),
                    otherwise: c.otherwise.clone(),
                },
                Group::Female,
                &mut map,
            )?;
        }
        let mut lex = IdentityPairLexicon {
            pairs,
            one_way: Vec::new(),
            contextual,
            map,
            groups,
        };
        for c in lex.contextual.clone() {
            for target in [&c.before_word, &c.otherwise] {
                lex.groups.entry(target.clone()).or_insert(Group::Male);
            }
        }
        for (from, to) in &one_way {
            if from == to {
                return Err(Error::Config(format!("{from:?} cannot swap with itself")));
            }
            let target_group = *lex.groups.get(to).ok_or_else(|| {
                Error::Config(format!("one-way target {to:?} is not a known gendered word"))
            })?;
            if lex.map.insert(from.clone(), Rule::To(to.clone())).is_some() {
                return Err(Error::Config(format!("{from:?} has more than one swap rule")));
            }
            lex.groups.insert(from.clone(), target_group.opposite());
        }
        lex.one_way = one_way;
        Ok(lex)
    }

    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<IdentityPairLexicon> {
        IdentityPairLexicon::new(pairs, Vec::new(), Vec::new())
    }

    /// The eight identity pairs the default test set is built from.
    pub fn default_test_pairs() -> IdentityPairLexicon {
        IdentityPairLexicon::from_pairs(owned(&[
            ("man", "woman"),
            ("men", "women"),
            ("boy", "girl"),
            ("boys", "girls"),
            ("male", "female"),
            ("husband", "wife"),
            ("brother", "sister"),
            ("father", "mother"),
        ]))
        .expect("valid built-in pairs")
    }

    /// Identity nouns, kinship terms and pronouns used for gender swapping.
    pub fn default_swap() -> IdentityPairLexicon {
        let mut pairs = IdentityPairLexicon::default_test_pairs().pairs;
        pairs.extend(owned(&[
            ("he", "she"),
            ("himself", "herself"),
            ("son", "daughter"),
            ("sons", "daughters"),
            ("brothers", "sisters"),
            ("fathers", "mothers"),
            ("husbands", "wives"),
            ("boyfriend", "girlfriend"),
            ("boyfriends", "girlfriends"),
            ("uncle", "aunt"),
            ("nephew", "niece"),
            ("dad", "mom"),
            ("king", "queen"),
            ("gentleman", "lady"),
            ("gentlemen", "ladies"),
            ("males", "females"),
            ("guy", "gal"),
            ("mr", "mrs"),
            ("sir", "madam"),
            ("grandfather", "grandmother"),
        ]));
        IdentityPairLexicon::new(
            pairs,
            owned(&[("him", "her"), ("his", "her"), ("hers", "his")]),
            vec![ContextualSwap {
                word: "her".into(),
                before_word: "his".into(),
                otherwise: "him".into(),
            }],
        )
        .expect("valid built-in swap lexicon")
    }

    /// Sections `[pairs]` (`male<TAB>female`), `[oneway]` (`from<TAB>to`) and
    /// `[contextual]` (`word<TAB>before_word<TAB>otherwise`).
    pub fn load(path: impl AsRef<Path>) -> Result<IdentityPairLexicon> {
        let path = path.as_ref();
        let (mut pairs, mut one_way, mut contextual) = (Vec::new(), Vec::new(), Vec::new());
        for e in lexfile::read(path)? {
            match e.section.as_str() {
                "pairs" => {
                    lexfile::expect_fields(&e, 2, path)?;
                    pairs.push((e.fields[0].clone(), e.fields[1].clone()));
                }
                "oneway" => {
                    lexfile::expect_fields(&e, 2, path)?;
                    one_way.push((e.fields[0].clone(), e.fields[1].clone()));
                }
                "contextual" => {
                    lexfile::expect_fields(&e, 3, path)?;
                    contextual.push(ContextualSwap {
                        word: e.fields[0].clone(),
                        before_word: e.fields[1].clone(),
                        otherwise: e.fields[2].clone(),
                    });
                }
                other => return Err(Error::parse(path, e.line, format!("unknown section [{other}]"))),
            }
        }
        IdentityPairLexicon::new(pairs, one_way, contextual)
    }

    pub fn group_of(&self, token: &str) -> Option<Group> {
        self.groups.get(token).copied()
    }

    /// Counterpart of `token` given the token that follows it, or `None`
    /// when the token is not gendered.
    pub fn counterpart(&self, token: &str, next: Option<&str>) -> Option<&str> {
        match self.map.get(token)? {
            Rule::To(t) => Some(t),
            Rule::Contextual { before_word, otherwise } => {
                if next.is_some_and(|n| !is_punctuation(n)) {
                    Some(before_word)
                } else {
                    Some(otherwise)
                }
            }
        }
    }

    /// True when swapping twice returns `token` in every context.
    pub fn is_unambiguous(&self, token: &str) -> bool {
        match self.map.get(token) {
            None => true,
            Some(Rule::To(t)) => match self.map.get(t) {
                Some(Rule::To(back)) => back == token,
                Some(Rule::Contextual { before_word, otherwise }) => {
                    before_word == token && otherwise == token
                }
                None => false,
            },
            Some(Rule::Contextual { before_word, otherwise }) => [before_word, otherwise]
                .iter()
                .all(|t| matches!(self.map.get(*t), Some(Rule::To(back)) if back == token)),
        }
    }
}

/// Casing of a surface token, re-applied to its replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CasePattern {
    Lower,
    Capitalized,
    Upper,
}

impl CasePattern {
    pub fn of(word: &str) -> CasePattern {
        let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
        let Some((first, rest)) = letters.split_first() else {
            return CasePattern::Lower;
        };
        if first.is_uppercase() && rest.iter().all(|c| c.is_lowercase()) {
            CasePattern::Capitalized
        } else if letters.iter().all(|c| c.is_uppercase()) {
            CasePattern::Upper
        } else {
            CasePattern::Lower
        }
    }

    pub fn apply(self, word: &str) -> String {
        match self {
            CasePattern::Lower => word.to_lowercase(),
            CasePattern::Upper => word.to_uppercase(),
            CasePattern::Capitalized => {
                let mut chars = word.chars();
                match chars.next() {
                    Some(c) => c.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
                    None => String::new(),
                }
            }
        }
    }
}

/// Token-level swap of every gendered token; other tokens are untouched.
pub fn swap_tokens(tokens: &[String], lexicon: &IdentityPairLexicon) -> Vec<String> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let next = tokens.get(i + 1).map(String::as_str);
            lexicon
                .counterpart(t, next)
                .map_or_else(|| t.clone(), str::to_string)
        })
        .collect()
}

/// Swaps gendered words in the sample text, keeping each word's casing and
/// all surrounding characters. Label is kept; the group flips.
pub fn gender_swap(sample: &Sample, lexicon: &IdentityPairLexicon) -> Sample {
    let text = &sample.text;
    let spans = token_spans(text);
    let lowered: Vec<String> = spans.iter().map(|&(a, b)| text[a..b].to_lowercase()).collect();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (i, &(a, b)) in spans.iter().enumerate() {
        let next = lowered.get(i + 1).map(String::as_str);
        if let Some(target) = lexicon.counterpart(&lowered[i], next) {
            out.push_str(&text[cursor..a]);
            out.push_str(&CasePattern::of(&text[a..b]).apply(target));
            cursor = b;
        }
    }
    out.push_str(&text[cursor..]);
    Sample {
        tokens: tokenize(&out),
        text: out,
        label: sample.label,
        group: sample.group.opposite(),
    }
}

/// Appends a gender-swapped copy of every training sample; valid and test
/// samples are unchanged.
pub fn augment(dataset: &Dataset, lexicon: &IdentityPairLexicon) -> Dataset {
    let mut parts: Vec<(Sample, Split)> = dataset.iter().map(|(s, sp)| (s.clone(), sp)).collect();
    let swapped: Vec<(Sample, Split)> = dataset
        .split_samples(Split::Train)
        .map(|s| (gender_swap(s, lexicon), Split::Train))
        .collect();
    parts.extend(swapped);
    Dataset::from_parts(dataset.name.clone(), parts)
}
