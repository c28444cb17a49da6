use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IdentityPairLexicon;
use crate::corpus::{Group, Label, Sample};
use crate::error::{Error, Result};
use crate::lexfile;

const IDENTITY_SLOT: &str = "{identity}";
const ADJECTIVE_SLOT: &str = "{adjective}";
const VERB_SLOT: &str = "{verb}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillSlot {
    Adjective,
    Verb,
}

impl FillSlot {
    fn marker(self) -> &'static str {
        match self {
            FillSlot::Adjective => ADJECTIVE_SLOT,
            FillSlot::Verb => VERB_SLOT,
        }
    }
}

/// A sentence pattern with one `{identity}` slot and at most one fill slot.
/// Patterns without a fill slot carry a fixed label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub pattern: String,
    pub slot: Option<FillSlot>,
    pub fixed_label: Option<Label>,
}

impl Template {
    /// Parses `pattern` or `pattern |label=fixed:0` / `|label=fixed:1`.
    pub fn parse(line: &str) -> Result<Template> {
        let (pattern, label) = match line.rsplit_once('|') {
            Some((p, suffix)) => {
                let suffix = suffix.trim();
                let value = suffix.strip_prefix("label=fixed:").ok_or_else(|| Error::Template {
                    template: line.to_string(),
                    message: format!("unrecognised suffix {suffix:?}"),
                })?;
                let label = match value.trim() {
                    "0" => Label::NonAbusive,
                    "1" => Label::Abusive,
                    other => {
                        return Err(Error::Template {
                            template: line.to_string(),
                            message: format!("fixed label must be 0 or 1, got {other:?}"),
                        })
                    }
                };
                (p.trim(), Some(label))
            }
            None => (line.trim(), None),
        };
        Template::new(pattern, label)
    }

    pub fn new(pattern: &str, fixed_label: Option<Label>) -> Result<Template> {
        let err = |message: &str| Error::Template {
            template: pattern.to_string(),
            message: message.to_string(),
        };
        if pattern.matches(IDENTITY_SLOT).count() != 1 {
            return Err(err("pattern must contain {identity} exactly once"));
        }
        let adjectives = pattern.matches(ADJECTIVE_SLOT).count();
        let verbs = pattern.matches(VERB_SLOT).count();
        let slot = match (adjectives, verbs) {
            (0, 0) => None,
            (1, 0) => Some(FillSlot::Adjective),
            (0, 1) => Some(FillSlot::Verb),
            _ => return Err(err("pattern may contain at most one fill slot")),
        };
        let stripped = pattern
            .replace(IDENTITY_SLOT, "")
            .replace(ADJECTIVE_SLOT, "")
            .replace(VERB_SLOT, "");
        if stripped.contains('{') || stripped.contains('}') {
            return Err(err("unknown slot"));
        }
        match (slot, fixed_label) {
            (None, None) => Err(err("template without a fill slot needs |label=fixed:0/1")),
            (Some(_), Some(_)) => Err(err("fixed labels apply only to templates without a fill slot")),
            _ => Ok(Template {
                pattern: pattern.to_string(),
                slot,
                fixed_label,
            }),
        }
    }

    /// The five template shapes used by default.
    pub fn defaults() -> Vec<Template> {
        [
            "You are a {adjective} {identity}.",
            "{verb} {identity}.",
            "Being {identity} is {adjective}.",
            "I am {identity}. |label=fixed:0",
            "I hate {identity}. |label=fixed:1",
        ]
        .iter()
        .map(|l| Template::parse(l).expect("valid built-in template"))
        .collect()
    }

    /// One template per line; blank lines and `#` comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Vec<Template>> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)?;
        let mut out = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            out.push(Template::parse(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
        }
        Ok(out)
    }

    fn render(&self, identity: &str, fill: Option<&str>) -> String {
        let mut text = self.pattern.replace(IDENTITY_SLOT, identity);
        if let (Some(slot), Some(word)) = (self.slot, fill) {
            text = text.replace(slot.marker(), word);
        }
        capitalize_first(&text)
    }
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Offensive and non-offensive fill words for template slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillLexicon {
    pub offensive_adjectives: Vec<String>,
    pub non_offensive_adjectives: Vec<String>,
    pub offensive_verbs: Vec<String>,
    pub non_offensive_verbs: Vec<String>,
}

impl Default for FillLexicon {
    /// 12 + 12 adjectives and 11 + 11 verbs: with the default templates and
    /// eight identity pairs this expands to 576 pairs.
    fn default() -> Self {
        let words = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        FillLexicon {
            offensive_adjectives: words(&[
                "disgusting", "filthy", "nasty", "rude", "horrible", "terrible", "awful", "worst",
                "idiotic", "stupid", "dumb", "ugly",
            ]),
            non_offensive_adjectives: words(&[
                "great", "fun", "nice", "neat", "happy", "good", "best", "kind", "lovely",
                "wonderful", "brilliant", "friendly",
            ]),
            offensive_verbs: words(&[
                "hate", "kill", "attack", "destroy", "slap", "punch", "curse", "despise", "mock",
                "insult", "hurt",
            ]),
            non_offensive_verbs: words(&[
                "help", "love", "respect", "believe", "congrats", "hi", "like", "thank", "hug",
                "welcome", "support",
            ]),
        }
    }
}

impl FillLexicon {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("offensive_adjectives", &self.offensive_adjectives),
            ("non_offensive_adjectives", &self.non_offensive_adjectives),
            ("offensive_verbs", &self.offensive_verbs),
            ("non_offensive_verbs", &self.non_offensive_verbs),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(Error::Config(format!("fill lexicon list {name} is empty")));
            }
        }
        let offensive: Vec<&String> = self.offensive_adjectives.iter().chain(&self.offensive_verbs).collect();
        if let Some(w) = self
            .non_offensive_adjectives
            .iter()
            .chain(&self.non_offensive_verbs)
            .find(|w| offensive.contains(w))
        {
            return Err(Error::Config(format!("{w:?} is listed as both offensive and non-offensive")));
        }
        Ok(())
    }

    /// Sections `[offensive_adjectives]`, `[non_offensive_adjectives]`,
    /// `[offensive_verbs]`, `[non_offensive_verbs]`, one word per line.
    pub fn load(path: impl AsRef<Path>) -> Result<FillLexicon> {
        let path = path.as_ref();
        let mut lex = FillLexicon {
            offensive_adjectives: vec![],
            non_offensive_adjectives: vec![],
            offensive_verbs: vec![],
            non_offensive_verbs: vec![],
        };
        for entry in lexfile::read(path)? {
            lexfile::expect_fields(&entry, 1, path)?;
            let list = match entry.section.as_str() {
                "offensive_adjectives" => &mut lex.offensive_adjectives,
                "non_offensive_adjectives" => &mut lex.non_offensive_adjectives,
                "offensive_verbs" => &mut lex.offensive_verbs,
                "non_offensive_verbs" => &mut lex.non_offensive_verbs,
                other => return Err(Error::parse(path, entry.line, format!("unknown section [{other}]"))),
            };
            list.push(entry.fields[0].clone());
        }
        lex.validate()?;
        Ok(lex)
    }

    /// Fill words for a slot, offensive words first, each with its label.
    fn fills(&self, slot: FillSlot) -> impl Iterator<Item = (&str, Label)> {
        let (off, non) = match slot {
            FillSlot::Adjective => (&self.offensive_adjectives, &self.non_offensive_adjectives),
            FillSlot::Verb => (&self.offensive_verbs, &self.non_offensive_verbs),
        };
        off.iter()
            .map(|w| (w.as_str(), Label::Abusive))
            .chain(non.iter().map(|w| (w.as_str(), Label::NonAbusive)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GeneratedPair {
    pub male: Sample,
    pub female: Sample,
    pub label: Label,
    pub template: String,
    pub fill: Option<String>,
    pub identity: (String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct GeneratedTestSet {
    pub pairs: Vec<GeneratedPair>,
}

impl GeneratedTestSet {
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn sample_count(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Male variant then female variant for every pair.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.pairs.iter().flat_map(|p| [&p.male, &p.female])
    }
}

/// Expands every template with every applicable fill word and every identity
/// pair. Each combination yields a male and a female sample sharing a label.
pub fn generate_test_set(
    templates: &[Template],
    fill: &FillLexicon,
    identities: &IdentityPairLexicon,
) -> Result<GeneratedTestSet> {
    if identities.pairs.is_empty() {
        return Err(Error::Config("no identity pairs to fill templates with".into()));
    }
    let mut pairs = Vec::new();
    for template in templates {
        let fills: Vec<(Option<&str>, Label)> = match (template.slot, template.fixed_label) {
            (Some(slot), _) => fill.fills(slot).map(|(w, l)| (Some(w), l)).collect(),
            (None, Some(label)) => vec![(None, label)],
            (None, None) => unreachable!("validated at construction"),
        };
        if fills.is_empty() {
            return Err(Error::Template {
                template: template.pattern.clone(),
                message: "no fill words for slot".into(),
            });
        }
        for (word, label) in fills {
            for (m, f) in &identities.pairs {
                pairs.push(GeneratedPair {
                    male: Sample::new(template.render(m, word), label).with_group(Group::Male),
                    female: Sample::new(template.render(f, word), label).with_group(Group::Female),
                    label,
                    template: template.pattern.clone(),
                    fill: word.map(str::to_string),
                    identity: (m.clone(), f.clone()),
                });
            }
        }
    }
    Ok(GeneratedTestSet { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> (Vec<Template>, FillLexicon, IdentityPairLexicon) {
        let t = vec![Template::parse("You are a {adjective} {identity}.").unwrap()];
        let fill = FillLexicon {
            offensive_adjectives: vec!["disgusting".into()],
            non_offensive_adjectives: vec!["nice".into()],
            offensive_verbs: vec!["hate".into()],
            non_offensive_verbs: vec!["love".into()],
        };
        let ids = IdentityPairLexicon::from_pairs(vec![("man".into(), "woman".into())]).unwrap();
        (t, fill, ids)
    }

    #[test]
    fn micro_expansion() {
        let (t, fill, ids) = micro();
        let set = generate_test_set(&t, &fill, &ids).unwrap();
        assert_eq!(set.pair_count(), 2);
        assert_eq!(set.sample_count(), 4);
        let texts: Vec<(&str, Label)> = set.samples().map(|s| (s.text.as_str(), s.label)).collect();
        assert!(texts.contains(&("You are a nice man.", Label::NonAbusive)));
        assert!(texts.contains(&("You are a disgusting woman.", Label::Abusive)));
    }

    #[test]
    fn default_expansion_is_576_pairs() {
        let set = generate_test_set(
            &Template::defaults(),
            &FillLexicon::default(),
            &IdentityPairLexicon::default_test_pairs(),
        )
        .unwrap();
        assert_eq!(set.pair_count(), 576);
        assert_eq!(set.sample_count(), 1152);
        let positives = set.samples().filter(|s| s.label.is_positive()).count();
        assert_eq!(positives, 576);
    }

    #[test]
    fn template_parsing_errors() {
        assert!(Template::parse("no identity here {adjective}").is_err());
        assert!(Template::parse("{identity} {identity} {adjective}").is_err());
        assert!(Template::parse("I am {identity}.").is_err());
        assert!(Template::parse("I am {identity}. |label=fixed:2").is_err());
        assert!(Template::parse("{verb} a {adjective} {identity}").is_err());
        assert!(Template::parse("{identity} is {noun}").is_err());
        let t = Template::parse("I hate {identity}. |label=fixed:1").unwrap();
        assert_eq!(t.fixed_label, Some(Label::Abusive));
    }

    #[test]
    fn empty_fill_list_is_an_error() {
        let (t, mut fill, ids) = micro();
        fill.offensive_adjectives.clear();
        fill.non_offensive_adjectives.clear();
        assert!(generate_test_set(&t, &fill, &ids).is_err());
    }

    #[test]
    fn fill_lists_must_be_disjoint() {
        let mut fill = FillLexicon::default();
        fill.non_offensive_verbs.push("hate".into());
        assert!(fill.validate().is_err());
    }

    #[test]
    fn slotless_template_count() {
        let t = vec![Template::parse("I am {identity}. |label=fixed:0").unwrap()];
        let set = generate_test_set(&t, &FillLexicon::default(), &IdentityPairLexicon::default_test_pairs()).unwrap();
        assert_eq!(set.pair_count(), 8);
        assert!(set.samples().all(|s| s.label == Label::NonAbusive));
    }
}
