//! VizWiz-style accuracy with a per-answer-type breakdown.
//!
//! Per-question credit is the leave-one-out VQA score: the mean over the ten
//! nine-answer subsets of `min(matches / 3, 1)`. Each subset contributes
//! `min(matches, 3)` thirds, so a question's credit is an integer number of
//! thirtieths. Reports keep those integers and divide only once, which makes
//! category and overall percentages exact up to a single rounding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textkit::{normalize_answer, NormalizationRules};

pub const HUMAN_ANSWERS: usize = 10;

/// Credit units per question: 10 subsets × 3 thirds.
const CREDIT_SCALE: u64 = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("expected {HUMAN_ANSWERS} human answers, got {got}")]
    WrongAnswerCount { got: usize },
    #[error("image id {0:?} appears more than once")]
    DuplicateKey(String),
}

/// Answer type column. Declaration order is the report's column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
    #[serde(rename = "unanswerable")]
    Unanswerable,
}

impl AnswerType {
    pub const ALL: [AnswerType; 4] = [Self::YesNo, Self::Number, Self::Other, Self::Unanswerable];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::YesNo => "yes/no",
            Self::Number => "number",
            Self::Other => "other",
            Self::Unanswerable => "unanswerable",
        }
    }
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub question: String,
    human_answers: Vec<String>,
    pub answer_type: AnswerType,
    /// Carried for reporting; "unanswerable" is scored as an ordinary string.
    pub answerable: bool,
}

impl AnnotationRecord {
    pub fn new(
        image_id: impl Into<String>,
        question: impl Into<String>,
        human_answers: Vec<String>,
        answer_type: AnswerType,
        answerable: bool,
    ) -> Result<Self, MetricsError> {
        if human_answers.len() != HUMAN_ANSWERS {
            return Err(MetricsError::WrongAnswerCount { got: human_answers.len() });
        }
        Ok(Self {
            image_id: image_id.into(),
            question: question.into(),
            human_answers,
            answer_type,
            answerable,
        })
    }

    pub fn human_answers(&self) -> &[String] {
        &self.human_answers
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "image")]
    pub image_id: String,
    pub answer: String,
}

impl Prediction {
    pub fn new(image_id: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            answer: answer.into(),
        }
    }
}

/// Credit in thirtieths of a point, in `0..=30`.
fn question_credit(pred: &str, humans: &[String], rules: &NormalizationRules) -> Result<u64, MetricsError> {
    if humans.len() != HUMAN_ANSWERS {
        return Err(MetricsError::WrongAnswerCount { got: humans.len() });
    }
    let pred = normalize_answer(pred, rules);
    let matches = humans
        .iter()
        .filter(|h| normalize_answer(h, rules) == pred)
        .count() as u64;
    // `matches` subsets drop a matching answer, the rest keep all of them.
    let n = HUMAN_ANSWERS as u64;
    let dropped = matches.saturating_sub(1).min(3);
    let kept = matches.min(3);
    Ok(matches * dropped + (n - matches) * kept)
}

/// Leave-one-out VQA accuracy of one prediction, in `[0, 1]`.
pub fn question_accuracy(pred: &str, humans: &[String], rules: &NormalizationRules) -> Result<f64, MetricsError> {
    Ok(question_credit(pred, humans, rules)? as f64 / CREDIT_SCALE as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryScore {
    pub accuracy: f64,
    pub count: usize,
    #[serde(skip)]
    credit: u64,
}

impl CategoryScore {
    fn from_credit(credit: u64, count: usize) -> Self {
        Self {
            accuracy: percent(credit, count),
            count,
            credit,
        }
    }

    /// Accuracy with two decimals, rounded half to even on the exact value.
    pub fn formatted(&self) -> String {
        format_percent(self.credit, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<AnswerType, CategoryScore>,
    pub overall: CategoryScore,
    /// Image ids present on only one side of the join, ascending.
    pub unmatched: Vec<String>,
}

impl EvalReport {
    pub fn category(&self, t: AnswerType) -> &CategoryScore {
        &self.per_category[&t]
    }

    /// Plain-text table: one column per answer type, then overall.
    pub fn to_table(&self) -> String {
        let mut headers: Vec<&str> = vec!["metric"];
        headers.extend(AnswerType::ALL.iter().map(|t| t.as_str()));
        headers.push("overall");

        let scores: Vec<&CategoryScore> = AnswerType::ALL
            .iter()
            .map(|t| self.category(*t))
            .chain(std::iter::once(&self.overall))
            .collect();
        let mut accuracy = vec!["accuracy".to_string()];
        accuracy.extend(scores.iter().map(|s| s.formatted()));
        let mut count = vec!["count".to_string()];
        count.extend(scores.iter().map(|s| s.count.to_string()));

        let widths: Vec<usize> = (0..headers.len())
            .map(|i| headers[i].len().max(accuracy[i].len()).max(count[i].len()))
            .collect();
        let mut out = String::new();
        for row in [
            headers.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            accuracy,
            count,
        ] {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(&cells.join("  "));
            out.push('\n');
        }
        out
    }
}

fn percent(credit: u64, count: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    (100 * credit) as f64 / (CREDIT_SCALE * count as u64) as f64
}

/// `100 * credit / (30 * count)` to two decimals, ties to even.
fn format_percent(credit: u64, count: usize) -> String {
    if count == 0 {
        return "0.00".to_string();
    }
    let num = 10_000 * u128::from(credit);
    let den = u128::from(CREDIT_SCALE) * count as u128;
    let (mut q, r) = (num / den, num % den);
    if 2 * r > den || (2 * r == den && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:02}", q / 100, q % 100)
}

/// Scores predictions against annotations, joined on image id.
///
/// Annotations with no prediction score zero; both they and predictions with
/// no annotation are listed in `unmatched`.
pub fn evaluate(
    preds: &[Prediction],
    anns: &[AnnotationRecord],
    rules: &NormalizationRules,
) -> Result<EvalReport, MetricsError> {
    let mut pred_by_id: BTreeMap<&str, &str> = BTreeMap::new();
    for p in preds {
        if pred_by_id.insert(&p.image_id, &p.answer).is_some() {
            return Err(MetricsError::DuplicateKey(p.image_id.clone()));
        }
    }
    let mut ann_by_id: BTreeMap<&str, &AnnotationRecord> = BTreeMap::new();
    for a in anns {
        if ann_by_id.insert(&a.image_id, a).is_some() {
            return Err(MetricsError::DuplicateKey(a.image_id.clone()));
        }
    }

    let mut sums: BTreeMap<AnswerType, (u64, usize)> = AnswerType::ALL.iter().map(|t| (*t, (0, 0))).collect();
    let mut unmatched = BTreeSet::new();
    for (id, ann) in &ann_by_id {
        let credit = match pred_by_id.get(id) {
            Some(answer) => question_credit(answer, &ann.human_answers, rules)?,
            None => {
                unmatched.insert(id.to_string());
                0
            }
        };
        let entry = sums.get_mut(&ann.answer_type).expect("all categories seeded");
        entry.0 += credit;
        entry.1 += 1;
    }
    unmatched.extend(
        pred_by_id
            .keys()
            .filter(|id| !ann_by_id.contains_key(*id))
            .map(|id| id.to_string()),
    );

    let total_credit = sums.values().map(|(c, _)| c).sum();
    let total_count = sums.values().map(|(_, n)| n).sum();
    Ok(EvalReport {
        per_category: sums
            .into_iter()
            .map(|(t, (credit, count))| (t, CategoryScore::from_credit(credit, count)))
            .collect(),
        overall: CategoryScore::from_credit(total_credit, total_count),
        unmatched: unmatched.into_iter().collect(),
    })
}
