//! ROC AUC, equal-error-rate thresholds, per-group error rates and the
//! false positive / false negative equality differences.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Group, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub score: f64,
    pub label: Label,
    pub group: Group,
}

impl PredictionRecord {
    pub fn new(score: f64, label: Label, group: Group) -> PredictionRecord {
        PredictionRecord { score, label, group }
    }
}

fn class_counts(records: &[PredictionRecord]) -> Result<(usize, usize)> {
    let pos = records.iter().filter(|r| r.label.is_positive()).count();
    let neg = records.len() - pos;
    if pos == 0 {
        return Err(Error::SingleClass("positive"));
    }
    if neg == 0 {
        return Err(Error::SingleClass("negative"));
    }
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::NonFinite(format!("prediction score {}", r.score)));
    }
    Ok((pos, neg))
}

fn sorted_by_score(records: &[PredictionRecord]) -> Vec<PredictionRecord> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal));
    sorted
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counting one half.
pub fn roc_auc(records: &[PredictionRecord]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(records)?;
    let sorted = sorted_by_score(records);
    // Counts are kept as integers (doubled for the half-credit) so the
    // result is exact up to the final division.
    let mut wins2: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos_here, mut neg_here) = (0u128, 0u128);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].label.is_positive() {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        wins2 += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Ok(wins2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// False positive and false negative rates at `threshold`; a record is
/// predicted positive iff `score >= threshold`.
fn error_rates(records: &[PredictionRecord], threshold: f64) -> Counts {
    let mut c = Counts::default();
    for r in records {
        c.add(r, threshold);
    }
    c
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

impl Counts {
    fn add(&mut self, r: &PredictionRecord, threshold: f64) {
        let predicted = r.score >= threshold;
        match (r.label.is_positive(), predicted) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Threshold minimising |FPR - FNR| over the midpoints between adjacent
/// distinct scores plus the two infinite sentinels; ties go to the lower
/// threshold.
pub fn eer_threshold(records: &[PredictionRecord]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(records)?;
    let sorted = sorted_by_score(records);

    // At -inf everything is predicted positive.
    let mut fp = n_neg;
    let mut fn_ = 0usize;
    let gap = |fp: usize, fn_: usize| (fp as f64 / n_neg as f64 - fn_ as f64 / n_pos as f64).abs();
    let mut best = (gap(fp, fn_), f64::NEG_INFINITY);

    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].label.is_positive() {
                fn_ += 1;
            } else {
                fp -= 1;
            }
            j += 1;
        }
        // Threshold sits just above sorted[i].score.
        let threshold = if j < sorted.len() {
            0.5 * (sorted[i].score + sorted[j].score)
        } else {
            f64::INFINITY
        };
        let g = gap(fp, fn_);
        if g < best.0 {
            best = (g, threshold);
        }
        i = j;
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub fpr: f64,
    pub fnr: f64,
}

/// Overall and per-identity-group error rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub overall: Rates,
    pub groups: BTreeMap<Group, Rates>,
}

pub fn group_rates(records: &[PredictionRecord], threshold: f64) -> Result<GroupRates> {
    let rates = |c: Counts, group: &str| -> Result<Rates> {
        if c.fp + c.tn == 0 {
            return Err(Error::EmptyGroup {
                group: group.to_string(),
                kind: "negative",
                rate: "FPR",
            });
        }
        if c.fn_ + c.tp == 0 {
            return Err(Error::EmptyGroup {
                group: group.to_string(),
                kind: "positive",
                rate: "FNR",
            });
        }
        Ok(Rates {
            fpr: c.fp as f64 / (c.fp + c.tn) as f64,
            fnr: c.fn_ as f64 / (c.fn_ + c.tp) as f64,
        })
    };
    let overall = rates(error_rates(records, threshold), "overall")?;
    let mut groups = BTreeMap::new();
    for g in Group::IDENTITIES {
        let members: Vec<PredictionRecord> = records.iter().filter(|r| r.group == g).copied().collect();
        groups.insert(g, rates(error_rates(&members, threshold), g.as_str())?);
    }
    Ok(GroupRates { overall, groups })
}

/// Equality differences `(FNED, FPED)`: the summed absolute deviation of each
/// group's rate from the overall rate.
pub fn equality_differences(rates: &GroupRates) -> (f64, f64) {
    let fned = rates.groups.values().map(|r| (rates.overall.fnr - r.fnr).abs()).sum();
    let fped = rates.groups.values().map(|r| (rates.overall.fpr - r.fpr).abs()).sum();
    (fned, fped)
}

/// Which record set fixes the decision threshold for the equality differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    #[default]
    Generated,
    Original,
}

impl std::str::FromStr for ThresholdSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(ThresholdSource::Generated),
            "original" => Ok(ThresholdSource::Original),
            other => Err(Error::Config(format!("threshold source must be generated|original, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub orig_auc: f64,
    pub gen_auc: f64,
    pub fned: f64,
    pub fped: f64,
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub rates: GroupRates,
}

pub fn build_report(original: &[PredictionRecord], generated: &[PredictionRecord]) -> Result<BiasReport> {
    build_report_with(original, generated, ThresholdSource::Generated)
}

pub fn build_report_with(
    original: &[PredictionRecord],
    generated: &[PredictionRecord],
    source: ThresholdSource,
) -> Result<BiasReport> {
    let orig_auc = roc_auc(original)?;
    let gen_auc = roc_auc(generated)?;
    let threshold = match source {
        ThresholdSource::Generated => eer_threshold(generated)?,
        ThresholdSource::Original => eer_threshold(original)?,
    };
    let rates = group_rates(generated, threshold)?;
    let (fned, fped) = equality_differences(&rates);
    Ok(BiasReport {
        orig_auc,
        gen_auc,
        fned,
        fped,
        threshold,
        rates,
    })
}

/// Reads `score,label,group` CSV with a header row.
pub fn parse_records_csv(content: &str) -> Result<Vec<PredictionRecord>> {
    let path = std::path::Path::new("<records>");
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate().skip(1) {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected score,label,group"));
        }
        let score: f64 = f[0].parse().map_err(|_| Error::parse(path, i + 1, format!("bad score {:?}", f[0])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(path, i + 1, format!("score {score} outside [0, 1]")));
        }
        let label = f[1]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| Error::parse(path, i + 1, format!("bad label {:?}", f[1])))?;
        let group = f[2].parse().map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        out.push(PredictionRecord { score, label, group });
    }
    Ok(out)
}

pub fn records_to_csv(records: &[PredictionRecord]) -> String {
    let mut s = String::from("score,label,group\n");
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.score, r.label.as_u8(), r.group));
    }
    s
}

/// JSON has no infinities; the threshold sentinels are written as strings.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(score: f64, label: u8, group: Group) -> PredictionRecord {
        PredictionRecord::new(score, Label::from_u8(label).unwrap(), group)
    }

    fn ungrouped(pos: &[f64], neg: &[f64]) -> Vec<PredictionRecord> {
        pos.iter()
            .map(|&s| rec(s, 1, Group::None))
            .chain(neg.iter().map(|&s| rec(s, 0, Group::None)))
            .collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&ungrouped(&[0.9, 0.8], &[0.3, 0.1])).unwrap(), 1.0);
        assert_eq!(roc_auc(&ungrouped(&[0.4, 0.4], &[0.4, 0.4, 0.4])).unwrap(), 0.5);
        assert_eq!(roc_auc(&ungrouped(&[0.9, 0.2], &[0.6, 0.4])).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_errors() {
        assert!(matches!(roc_auc(&ungrouped(&[0.1], &[])), Err(Error::SingleClass("negative"))));
        assert!(matches!(roc_auc(&ungrouped(&[], &[0.1])), Err(Error::SingleClass("positive"))));
    }

    #[test]
    fn eer_examples() {
        let sep = ungrouped(&[0.9, 0.8], &[0.2, 0.1]);
        let t = eer_threshold(&sep).unwrap();
        assert_eq!(t, 0.5);
        let r = error_rates(&sep, t);
        assert_eq!((r.fp, r.fn_), (0, 0));

        let mixed = ungrouped(&[0.9, 0.3], &[0.7, 0.1]);
        let t = eer_threshold(&mixed).unwrap();
        assert_eq!(t, 0.5);
        let r = error_rates(&mixed, t);
        assert_eq!((r.fp, r.fn_), (1, 1));
    }

    #[test]
    fn eer_tie_breaks_to_lower_threshold() {
        // Candidates -inf, 0.35, 0.65, inf have gaps 1, 0.5, 0.5, 1.
        let recs = ungrouped(&[0.5], &[0.2, 0.8]);
        assert_eq!(eer_threshold(&recs).unwrap(), 0.5 * (0.2 + 0.5));
    }

    #[test]
    fn eer_with_all_scores_equal_picks_a_sentinel() {
        let recs = ungrouped(&[0.5, 0.5], &[0.5]);
        let t = eer_threshold(&recs).unwrap();
        assert!(t.is_infinite());
    }

    fn grouped_fixture() -> Vec<PredictionRecord> {
        vec![
            // male: 4 negatives (2 false positives), 2 positives (both caught)
            rec(0.9, 0, Group::Male),
            rec(0.8, 0, Group::Male),
            rec(0.1, 0, Group::Male),
            rec(0.2, 0, Group::Male),
            rec(0.95, 1, Group::Male),
            rec(0.85, 1, Group::Male),
            // female: 2 negatives (1 false positive), 2 positives
            rec(0.7, 0, Group::Female),
            rec(0.3, 0, Group::Female),
            rec(0.6, 1, Group::Female),
            rec(0.65, 1, Group::Female),
        ]
    }

    #[test]
    fn group_rates_hand_counted() {
        let r = group_rates(&grouped_fixture(), 0.5).unwrap();
        assert_eq!(r.groups[&Group::Male].fpr, 0.5);
        assert_eq!(r.groups[&Group::Female].fpr, 0.5);
        assert_eq!(r.overall.fpr, 0.5);
        assert_eq!(r.overall.fnr, 0.0);
    }

    #[test]
    fn group_rates_degenerate_thresholds() {
        let recs = grouped_fixture();
        let all_pos = group_rates(&recs, f64::NEG_INFINITY).unwrap();
        assert_eq!(all_pos.overall, Rates { fpr: 1.0, fnr: 0.0 });
        assert!(all_pos.groups.values().all(|r| *r == Rates { fpr: 1.0, fnr: 0.0 }));
        let perfect = vec![
            rec(0.9, 1, Group::Male),
            rec(0.1, 0, Group::Male),
            rec(0.8, 1, Group::Female),
            rec(0.2, 0, Group::Female),
        ];
        let r = group_rates(&perfect, 0.5).unwrap();
        assert_eq!(equality_differences(&r), (0.0, 0.0));
        assert_eq!(r.overall, Rates { fpr: 0.0, fnr: 0.0 });
    }

    #[test]
    fn group_rates_empty_denominator() {
        let recs = vec![rec(0.9, 1, Group::Male), rec(0.1, 0, Group::Male), rec(0.8, 1, Group::Female)];
        match group_rates(&recs, 0.5) {
            Err(Error::EmptyGroup { group, rate, .. }) => {
                assert_eq!(group, "female");
                assert_eq!(rate, "FPR");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn equality_difference_example() {
        let rates = GroupRates {
            overall: Rates { fpr: 0.2, fnr: 0.3 },
            groups: BTreeMap::from([
                (Group::Male, Rates { fpr: 0.1, fnr: 0.3 }),
                (Group::Female, Rates { fpr: 0.4, fnr: 0.3 }),
            ]),
        };
        let (fned, fped) = equality_differences(&rates);
        assert!((fped - 0.3).abs() < 1e-12);
        assert_eq!(fned, 0.0);
    }

    #[test]
    fn report_for_fair_perfect_model() {
        let generated = vec![
            rec(0.9, 1, Group::Male),
            rec(0.9, 1, Group::Female),
            rec(0.1, 0, Group::Male),
            rec(0.1, 0, Group::Female),
        ];
        let report = build_report(&generated, &generated).unwrap();
        assert_eq!(report.gen_auc, 1.0);
        assert_eq!((report.fned, report.fped), (0.0, 0.0));
    }

    #[test]
    fn report_for_gender_driven_model() {
        // Scores depend only on gender; labels balanced within each group.
        let mut generated = Vec::new();
        for label in [0, 1] {
            for _ in 0..3 {
                generated.push(rec(0.9, label, Group::Female));
                generated.push(rec(0.1, label, Group::Male));
            }
        }
        let report = build_report(&generated, &generated).unwrap();
        assert!(report.fped > 0.0);
        assert_eq!(report.fped, report.fned);
        assert_eq!(report.fped, 1.0);
    }

    #[test]
    fn report_json_round_trip() {
        let generated = vec![
            rec(0.123456789012345678, 1, Group::Male),
            rec(0.3333333333333333, 1, Group::Female),
            rec(0.1, 0, Group::Male),
            rec(0.2, 0, Group::Female),
        ];
        let report = build_report(&generated, &generated).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: BiasReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn infinite_threshold_survives_json() {
        let mut report = build_report(&grouped_fixture(), &grouped_fixture()).unwrap();
        report.threshold = f64::NEG_INFINITY;
        let back: BiasReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        assert_eq!(back.threshold, f64::NEG_INFINITY);
    }

    #[test]
    fn csv_round_trip() {
        let recs = grouped_fixture();
        assert_eq!(parse_records_csv(&records_to_csv(&recs)).unwrap(), recs);
        assert!(parse_records_csv("score,label,group\n1.5,1,male\n").is_err());
    }
}
