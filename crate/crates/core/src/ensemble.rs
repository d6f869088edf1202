//! Levenshtein-consensus answer ensembling.
//!
//! For each question the candidate answers from several models are compared
//! on their normalized forms. A strict-majority answer wins outright;
//! otherwise the medoid (smallest summed edit distance to all other
//! candidates) is selected. The winner's original surface string is returned.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textkit::{levenshtein, normalize_answer, NormalizationRules};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("question {0:?} has no candidate answers")]
    EmptyCandidates(String),
    #[error("question {question:?} lists model {model:?} more than once")]
    DuplicateModel { question: String, model: String },
    #[error("question key {0:?} appears more than once")]
    DuplicateKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_id: String,
    pub answer: String,
}

impl Candidate {
    pub fn new(model_id: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            answer: answer.into(),
        }
    }
}

/// All model answers for one question, in model order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub question_key: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(question_key: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        Self {
            question_key: question_key.into(),
            candidates,
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.candidates.is_empty() {
            return Err(EnsembleError::EmptyCandidates(self.question_key.clone()));
        }
        let mut seen = HashSet::with_capacity(self.candidates.len());
        for c in &self.candidates {
            if !seen.insert(c.model_id.as_str()) {
                return Err(EnsembleError::DuplicateModel {
                    question: self.question_key.clone(),
                    model: c.model_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Ensemble settings. Normalization applies only to the comparison copies;
/// the selected answer is always returned verbatim.
///
/// Medoid ties are resolved by, in order: smaller total distance, higher
/// frequency of the normalized answer, shorter normalized answer,
/// lexicographically smaller normalized answer, earlier position in the
/// candidate list. Positions are unique, so the order is total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub rules: NormalizationRules,
}

impl EnsembleConfig {
    pub fn new(rules: NormalizationRules) -> Self {
        Self { rules }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub question_key: String,
    pub answer: String,
    pub winning_model: String,
    /// Sum of edit distances from the winner's normalized answer to every
    /// other candidate's normalized answer.
    pub total_distance: usize,
}

struct Scored<'a> {
    index: usize,
    normalized: &'a str,
    norm_len: usize,
    frequency: usize,
    total: usize,
}

fn tie_break(a: &Scored<'_>, b: &Scored<'_>) -> Ordering {
    a.total
        .cmp(&b.total)
        .then(b.frequency.cmp(&a.frequency))
        .then(a.norm_len.cmp(&b.norm_len))
        .then(a.normalized.cmp(b.normalized))
        .then(a.index.cmp(&b.index))
}

/// Picks one answer for a question.
pub fn select_answer(set: &CandidateSet, cfg: &EnsembleConfig) -> Result<EnsembleResult, EnsembleError> {
    set.validate()?;
    let normalized: Vec<String> = set
        .candidates
        .iter()
        .map(|c| normalize_answer(&c.answer, &cfg.rules))
        .collect();

    let mut frequency: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &normalized {
        *frequency.entry(n.as_str()).or_default() += 1;
    }

    // Distances between distinct normalized strings, computed once each.
    let distinct: Vec<&str> = frequency.keys().copied().collect();
    let total_for = |target: &str| -> usize {
        distinct
            .iter()
            .filter(|&&other| other != target)
            .map(|&other| frequency[other] * levenshtein(target, other))
            .sum()
    };

    let n = set.candidates.len();
    let majority = frequency.iter().find(|(_, &count)| 2 * count > n).map(|(s, _)| *s);

    let winner = match majority {
        Some(answer) => {
            let index = normalized.iter().position(|x| x == answer).expect("majority answer is present");
            Scored {
                index,
                normalized: answer,
                norm_len: answer.chars().count(),
                frequency: frequency[answer],
                total: total_for(answer),
            }
        }
        None => {
            let totals: BTreeMap<&str, usize> = distinct.iter().map(|&s| (s, total_for(s))).collect();
            normalized
                .iter()
                .enumerate()
                .map(|(index, norm)| Scored {
                    index,
                    normalized: norm,
                    norm_len: norm.chars().count(),
                    frequency: frequency[norm.as_str()],
                    total: totals[norm.as_str()],
                })
                .min_by(tie_break)
                .expect("validated non-empty")
        }
    };

    let chosen = &set.candidates[winner.index];
    Ok(EnsembleResult {
        question_key: set.question_key.clone(),
        answer: chosen.answer.clone(),
        winning_model: chosen.model_id.clone(),
        total_distance: winner.total,
    })
}

/// Runs [`select_answer`] over a batch. Results come back sorted by question
/// key (byte order) whatever the input order.
pub fn ensemble_run(sets: &[CandidateSet], cfg: &EnsembleConfig) -> Result<Vec<EnsembleResult>, EnsembleError> {
    let mut by_key: BTreeMap<&str, &CandidateSet> = BTreeMap::new();
    for set in sets {
        if by_key.insert(set.question_key.as_str(), set).is_some() {
            return Err(EnsembleError::DuplicateKey(set.question_key.clone()));
        }
    }
    by_key.values().map(|set| select_answer(set, cfg)).collect()
}
