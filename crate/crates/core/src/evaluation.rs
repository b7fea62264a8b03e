//! Tumor presence labels, their text form, and detection metrics.

use crate::organ::Organ;
use crate::report::StructuredReport;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::LazyLock;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvaluationError {
    #[error("could not find labels for: {}", .missing.join(", "))]
    Parse { missing: Vec<String> },
    #[error("{pred} predictions but {truth} truth labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("unknown uncertain-label policy `{0}`")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "yes")]
    Yes,
    #[serde(rename = "no")]
    No,
    #[serde(rename = "U")]
    Uncertain,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Yes, Label::No, Label::Uncertain];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
            Label::Uncertain => "U",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" | "1" | "true" => Some(Label::Yes),
            "no" | "n" | "0" | "false" => Some(Label::No),
            "u" | "uncertain" => Some(Label::Uncertain),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Presence label per organ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TumorLabels {
    pub liver: Label,
    pub kidney: Label,
    pub pancreas: Label,
}

impl TumorLabels {
    pub fn new(liver: Label, kidney: Label, pancreas: Label) -> Self {
        TumorLabels { liver, kidney, pancreas }
    }

    pub fn get(&self, organ: Organ) -> Label {
        match organ {
            Organ::Liver => self.liver,
            Organ::Kidney => self.kidney,
            Organ::Pancreas => self.pancreas,
        }
    }

    /// All 27 combinations, liver varying slowest.
    pub fn all() -> impl Iterator<Item = TumorLabels> {
        Label::ALL.into_iter().flat_map(|l| {
            Label::ALL
                .into_iter()
                .flat_map(move |k| Label::ALL.into_iter().map(move |p| TumorLabels::new(l, k, p)))
        })
    }
}

/// Order used in the answer format: liver, kidney, pancreas.
const ANSWER_ORDER: [Organ; 3] = [Organ::Liver, Organ::Kidney, Organ::Pancreas];

/// `liver tumor presence=yes; kidney tumor presence=U; pancreas tumor presence=no`
pub fn format_labels(l: &TumorLabels) -> String {
    ANSWER_ORDER
        .iter()
        .map(|o| format!("{} tumor presence={}", o.name(), l.get(*o)))
        .collect::<Vec<_>>()
        .join("; ")
}

static LABEL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(liver|kidney|pancreas)\s+tumou?r\s+presence\s*[=:]\s*(yes|no|u)\b").expect("valid regex"));

/// Case-insensitive parse of the three `<organ> tumor presence=<value>`
/// pairs. The first occurrence of each organ wins.
pub fn parse_labels(answer: &str) -> Result<TumorLabels, EvaluationError> {
    let mut found: [Option<Label>; 3] = [None; 3];
    for c in LABEL_RE.captures_iter(answer) {
        let organ: Organ = c[1].to_ascii_lowercase().parse().expect("regex admits only organs");
        let slot = ANSWER_ORDER.iter().position(|o| *o == organ).expect("organ in order");
        if found[slot].is_none() {
            found[slot] = Label::parse(&c[2]);
        }
    }
    let missing: Vec<String> = ANSWER_ORDER
        .iter()
        .zip(&found)
        .filter(|(_, f)| f.is_none())
        .map(|(o, _)| o.name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(EvaluationError::Parse { missing });
    }
    Ok(TumorLabels::new(
        found[0].expect("checked"),
        found[1].expect("checked"),
        found[2].expect("checked"),
    ))
}

/// Labels of our own report: yes iff the organ has findings. Never uncertain.
pub fn rule_label_structured(r: &StructuredReport) -> TumorLabels {
    let l = |o: Organ| if r.findings_for(o).next().is_some() { Label::Yes } else { Label::No };
    TumorLabels::new(l(Organ::Liver), l(Organ::Kidney), l(Organ::Pancreas))
}

/// How an uncertain label enters the 2×2 table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainPolicy {
    AsYes,
    AsNo,
    /// Skip cases where either side is uncertain.
    #[default]
    Drop,
}

impl std::str::FromStr for UncertainPolicy {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "as_yes" | "yes" => Ok(UncertainPolicy::AsYes),
            "as_no" | "no" => Ok(UncertainPolicy::AsNo),
            "drop" => Ok(UncertainPolicy::Drop),
            other => Err(EvaluationError::UnknownPolicy(other.to_string())),
        }
    }
}

impl UncertainPolicy {
    fn resolve(self, l: Label) -> Option<bool> {
        match (l, self) {
            (Label::Yes, _) | (Label::Uncertain, UncertainPolicy::AsYes) => Some(true),
            (Label::No, _) | (Label::Uncertain, UncertainPolicy::AsNo) => Some(false),
            (Label::Uncertain, UncertainPolicy::Drop) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// tp / (tp + fn); `None` without positives.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// tn / (tn + fp); `None` without negatives.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Fraction as a percentage with one decimal.
pub fn percent(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub matrix: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    /// Cases skipped by the uncertain policy.
    pub dropped: usize,
}

impl From<ConfusionMatrix> for Scores {
    fn from(m: ConfusionMatrix) -> Self {
        Scores {
            matrix: m,
            sensitivity: m.sensitivity(),
            specificity: m.specificity(),
            f1: m.f1(),
            dropped: 0,
        }
    }
}

pub fn score(
    pred: &[TumorLabels],
    truth: &[TumorLabels],
    organ: Organ,
    policy: UncertainPolicy,
) -> Result<Scores, EvaluationError> {
    if pred.len() != truth.len() {
        return Err(EvaluationError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    let mut dropped = 0;
    for (p, t) in pred.iter().zip(truth) {
        match (policy.resolve(p.get(organ)), policy.resolve(t.get(organ))) {
            (Some(p), Some(t)) => m.add(p, t),
            _ => dropped += 1,
        }
    }
    Ok(Scores { dropped, ..m.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    All,
    Large,
    Small,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::Large => "large",
            Stratum::Small => "small",
        }
    }
}

/// Small iff the largest tumor is at most `cutoff_cm`.
pub fn size_stratum(largest_cm: f64, cutoff_cm: f64) -> Stratum {
    if largest_cm <= cutoff_cm {
        Stratum::Small
    } else {
        Stratum::Large
    }
}

/// Splits case indices with a tumor into (small, large); cases without a
/// measured tumor are in neither.
pub fn size_stratify(largest_cm: &[Option<f64>], cutoff_cm: f64) -> (Vec<usize>, Vec<usize>) {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for (i, d) in largest_cm.iter().enumerate() {
        match d.map(|d| size_stratum(d, cutoff_cm)) {
            Some(Stratum::Small) => small.push(i),
            Some(_) => large.push(i),
            None => {}
        }
    }
    (small, large)
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub organ: String,
    pub stratum: Stratum,
    #[serde(flatten)]
    pub scores: Scores,
}

/// Metrics for all cases and per size stratum. Positives are split by the
/// truth's largest tumor size; negatives are shared by every stratum.
pub fn evaluate_organ(
    pred: &[TumorLabels],
    truth: &[TumorLabels],
    largest_cm: &[Option<f64>],
    organ: Organ,
    policy: UncertainPolicy,
    cutoff_cm: f64,
) -> Result<Vec<MetricRow>, EvaluationError> {
    if pred.len() != truth.len() || largest_cm.len() != truth.len() {
        return Err(EvaluationError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len().min(largest_cm.len()),
        });
    }
    let all = score(pred, truth, organ, policy)?;
    let mut rows = vec![MetricRow {
        organ: organ.name().into(),
        stratum: Stratum::All,
        scores: all,
    }];
    for stratum in [Stratum::Large, Stratum::Small] {
        let keep: Vec<usize> = (0..truth.len())
            .filter(|&i| match policy.resolve(truth[i].get(organ)) {
                Some(true) => largest_cm[i].is_some_and(|d| size_stratum(d, cutoff_cm) == stratum),
                _ => true,
            })
            .collect();
        let p: Vec<TumorLabels> = keep.iter().map(|&i| pred[i]).collect();
        let t: Vec<TumorLabels> = keep.iter().map(|&i| truth[i]).collect();
        rows.push(MetricRow {
            organ: organ.name().into(),
            stratum,
            scores: score(&p, &t, organ, policy)?,
        });
    }
    Ok(rows)
}

/// CSV with one row per (organ, stratum). Metrics are percentages with one
/// decimal; undefined values are written as `NA`.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["organ", "stratum", "tp", "fp", "tn", "fn", "sensitivity", "specificity", "f1"])
        .expect("in-memory write");
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{:.1}", percent(x)));
    for r in rows {
        let m = r.scores.matrix;
        w.write_record([
            r.organ.clone(),
            r.stratum.as_str().into(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.tn.to_string(),
            m.fn_.to_string(),
            cell(r.scores.sensitivity),
            cell(r.scores.specificity),
            cell(r.scores.f1),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
